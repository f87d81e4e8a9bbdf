//! Uncertainty quantification and tests for importance estimates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};
use crate::exec;
use crate::learners::Learner;
use crate::loss::{mean, sample_var, Loss};
use crate::methods::MethodConfig;
use crate::result::{z_quantile, FIResult};
use crate::seed::{tag, SeedPolicy};
use crate::split::split_indices;

pub const DEFAULT_RESAMPLES: usize = 15;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const MIN_NULLS: usize = 20;
pub const SUBSAMPLE_FRACTION: f64 = 0.7;

/// Name of the variance correction recorded in result warnings.
pub const VARIANCE_CORRECTION: &str = "nadeau-bengio (1/m + n_test/n_train)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    PairedT,
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub alternative: Alternative,
    /// Set when the differences have zero variance and the test is degenerate.
    pub degenerate: bool,
}

fn differences(before: &[f64], after: &[f64]) -> Result<Vec<f64>> {
    if before.len() != after.len() {
        return Err(invalid(format!("paired vectors differ in length ({} vs {})", before.len(), after.len())));
    }
    if before.len() < 3 {
        return Err(invalid("paired tests need at least 3 observations"));
    }
    Ok(after.iter().zip(before).map(|(a, b)| a - b).collect())
}

/// Paired t test on `after - before` (positive means `after` has larger loss).
pub fn paired_t_test(before: &[f64], after: &[f64], alternative: Alternative) -> Result<TestResult> {
    let d = differences(before, after)?;
    let n = d.len();
    let var = sample_var(&d);
    let m = mean(&d);
    let mut out = TestResult { kind: TestKind::PairedT, statistic: 0.0, p_value: 1.0, n, alternative, degenerate: false };
    if var <= 0.0 || !var.is_finite() {
        out.degenerate = true;
        return Ok(out);
    }
    let t = m / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| FiError::Compute(e.to_string()))?;
    out.statistic = t;
    out.p_value = match alternative {
        Alternative::TwoSided => 2.0 * dist.cdf(-t.abs()),
        Alternative::Greater => 1.0 - dist.cdf(t),
    }
    .clamp(0.0, 1.0);
    Ok(out)
}

/// Sign-flip permutation test on the mean of `after - before`, with the
/// `+1` convention so the p-value is never zero.
pub fn permutation_test(
    before: &[f64],
    after: &[f64],
    n_perms: usize,
    alternative: Alternative,
    seed: u64,
) -> Result<TestResult> {
    let d = differences(before, after)?;
    if n_perms == 0 {
        return Err(invalid("n_perms must be at least 1"));
    }
    let n = d.len();
    let observed = mean(&d);
    let mut out = TestResult { kind: TestKind::SignFlip, statistic: observed, p_value: 1.0, n, alternative, degenerate: false };
    if d.iter().all(|&v| v == 0.0) {
        out.degenerate = true;
        return Ok(out);
    }
    let seeds = SeedPolicy::new(seed);
    let exceed = |stat: f64| match alternative {
        Alternative::TwoSided => stat.abs() >= observed.abs() - 1e-12 * observed.abs(),
        Alternative::Greater => stat >= observed - 1e-12 * observed.abs(),
    };
    let hits: usize = exec::map_indexed(n_perms, |b| {
        let mut rng = seeds.rng(&[tag::PERM_TEST, b as u64]);
        let s: f64 = d.iter().map(|&v| if rng.random::<bool>() { v } else { -v }).sum();
        usize::from(exceed(s / n as f64))
    })
    .into_iter()
    .sum();
    out.p_value = (1 + hits) as f64 / (n_perms + 1) as f64;
    Ok(out)
}

/// Add one-sided paired t-test p-values (importance > 0) to every record
/// that carries per-instance differences.
pub fn attach_p_values(result: &mut FIResult) -> Result<()> {
    for f in &mut result.features {
        if f.per_instance.len() >= 3 {
            let zeros = vec![0.0; f.per_instance.len()];
            f.p_value = Some(paired_t_test(&zeros, &f.per_instance, Alternative::Greater)?.p_value);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    Holm,
    BenjaminiHochberg,
}

impl Adjustment {
    pub fn id(&self) -> &'static str {
        match self {
            Adjustment::Holm => "holm",
            Adjustment::BenjaminiHochberg => "benjamini-hochberg",
        }
    }
}

impl fmt::Display for Adjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Adjustment {
    type Err = FiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holm" => Ok(Adjustment::Holm),
            "bh" | "benjamini-hochberg" => Ok(Adjustment::BenjaminiHochberg),
            _ => Err(invalid(format!("unknown adjustment '{s}' (available: holm, benjamini-hochberg)"))),
        }
    }
}

/// Holm step-down or Benjamini-Hochberg step-up adjusted p-values, in the
/// input order.
pub fn adjust_pvalues(p: &[f64], method: Adjustment) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adj = vec![0.0; m];
    match method {
        Adjustment::Holm => {
            let mut running = 0.0_f64;
            for (rank, &i) in order.iter().enumerate() {
                running = running.max(((m - rank) as f64 * p[i]).min(1.0));
                adj[i] = running;
            }
        }
        Adjustment::BenjaminiHochberg => {
            let mut running = 1.0_f64;
            for (rank, &i) in order.iter().enumerate().rev() {
                running = running.min((m as f64 / (rank + 1) as f64 * p[i]).min(1.0));
                adj[i] = running;
            }
        }
    }
    Ok(adj)
}

/// Learner-level confidence intervals from repeated subsampling.
///
/// Each resample fits on a random 70% and estimates importance on the rest.
/// The across-resample variance is scaled by `1/m + n_test/n_train` instead
/// of `1/m` to account for overlapping training sets.
pub fn learner_fi_ci(
    learner: &Arc<dyn Learner>,
    data: &Dataset,
    loss: Loss,
    method: &MethodConfig,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<FIResult> {
    if n_resamples < 2 {
        return Err(invalid("learner_fi_ci needs at least 2 resamples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level {level} outside (0, 1)")));
    }
    let seeds = SeedPolicy::new(seed);
    let runs = exec::try_map_indexed(n_resamples, |b| -> Result<FIResult> {
        let child = seeds.child(&[tag::RESAMPLE, b as u64]);
        let (train, test) = split_indices(data.n(), SUBSAMPLE_FRACTION, child)?.apply(data);
        method.evaluate(learner, &train, &test, loss, child.derive(&[]))
    })?;
    let n_train = (data.n() as f64 * SUBSAMPLE_FRACTION).round();
    let n_test = data.n() as f64 - n_train;
    let m = n_resamples as f64;
    let factor = 1.0 / m + n_test / n_train;
    let z = z_quantile(level);

    let mut out = runs[0].clone();
    out.seed = seed;
    out.warnings.push(format!("variance correction: {VARIANCE_CORRECTION}"));
    for (k, rec) in out.features.iter_mut().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|r| r.features[k].estimate).collect();
        let est = mean(&vals);
        let var = sample_var(&vals);
        let se = (factor * var).sqrt();
        if var == 0.0 {
            out.warnings.push(format!("{}: zero variance across resamples, CI has zero width", rec.name));
        }
        rec.estimate = est;
        rec.std_error = se;
        rec.instance_std_error = None;
        rec.per_instance = Vec::new();
        rec.n_repetitions = n_resamples;
        rec.ci_low = Some(est - z * se);
        rec.ci_high = Some(est + z * se);
        rec.p_value = None;
    }
    for r in &runs[1..] {
        for w in &r.warnings {
            if !out.warnings.contains(w) {
                out.warnings.push(w.clone());
            }
        }
    }
    Ok(out)
}

/// Importances recomputed on datasets with a permuted target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullImportanceSet {
    pub names: Vec<String>,
    /// `values[b][j]`: importance of feature `j` under the `b`-th permutation
    pub values: Vec<Vec<f64>>,
}

impl NullImportanceSet {
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn feature(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[j]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PimpResult {
    /// Observed importances with `p_value` filled in.
    pub observed: FIResult,
    pub nulls: NullImportanceSet,
}

/// Permutation importance p-values: the whole pipeline (fit and importance
/// estimation) is rerun on `m_nulls` target permutations and
/// `p_j = (1 + #{null_j >= observed_j}) / (m_nulls + 1)`.
pub fn pimp(
    learner: &Arc<dyn Learner>,
    data: &Dataset,
    loss: Loss,
    method: &MethodConfig,
    m_nulls: usize,
    seed: u64,
) -> Result<PimpResult> {
    if m_nulls < MIN_NULLS {
        return Err(invalid(format!("pimp needs at least {MIN_NULLS} null importances, got {m_nulls}")));
    }
    let mut observed = method.analyze(learner, data, loss, seed)?;
    let seeds = SeedPolicy::new(seed);
    let outcomes = exec::map_indexed(m_nulls, |b| -> Result<Vec<f64>> {
        let mut y = data.target().to_vec();
        y.shuffle(&mut seeds.rng(&[tag::NULL_TARGET, b as u64]));
        let permuted = data.with_target(y)?;
        Ok(method.analyze(learner, &permuted, loss, seed)?.estimates())
    });
    let failed = outcomes.iter().filter(|r| r.is_err()).count();
    let mut values = Vec::with_capacity(m_nulls);
    for r in outcomes {
        match r {
            Ok(v) => values.push(v),
            Err(e) => return Err(FiError::Compute(format!("{failed} of {m_nulls} null refits failed; first error: {e}"))),
        }
    }
    let nulls = NullImportanceSet { names: observed.features.iter().map(|f| f.name.clone()).collect(), values };
    for (j, f) in observed.features.iter_mut().enumerate() {
        let hits = nulls.values.iter().filter(|v| v[j] >= f.estimate).count();
        f.p_value = Some((1 + hits) as f64 / (m_nulls + 1) as f64);
    }
    Ok(PimpResult { observed, nulls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::builtin;
    use crate::learners::{LearnerKind, LearnerSpec};
    use crate::methods::Method;
    use crate::model::{names, FnModel};
    use crate::perturb::pfi;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn ols() -> Arc<dyn Learner> {
        Arc::new(LearnerSpec::new(LearnerKind::Ols))
    }

    /// Brute-force reference: Holm as max over prefixes, BH as min over suffixes.
    fn reference(p: &[f64], method: Adjustment) -> Vec<f64> {
        let m = p.len();
        let mut sorted: Vec<f64> = p.to_vec();
        sorted.sort_by(f64::total_cmp);
        p.iter()
            .map(|&pi| {
                let r = sorted.iter().position(|&s| s == pi).unwrap();
                match method {
                    Adjustment::Holm => (0..=r).map(|k| ((m - k) as f64 * sorted[k]).min(1.0)).fold(0.0, f64::max),
                    Adjustment::BenjaminiHochberg => {
                        let last = sorted.iter().rposition(|&s| s == pi).unwrap();
                        (last..m).map(|k| (m as f64 / (k + 1) as f64 * sorted[k]).min(1.0)).fold(1.0, f64::min)
                    }
                }
            })
            .collect()
    }

    #[test]
    fn hand_computed_adjustments() {
        let p = [0.01, 0.02, 0.03];
        let holm = adjust_pvalues(&p, Adjustment::Holm).unwrap();
        let bh = adjust_pvalues(&p, Adjustment::BenjaminiHochberg).unwrap();
        for (a, b) in holm.iter().zip([0.03, 0.04, 0.04]) {
            assert!((a - b).abs() < 1e-15, "{holm:?}");
        }
        for (a, b) in bh.iter().zip([0.03, 0.03, 0.03]) {
            assert!((a - b).abs() < 1e-15, "{bh:?}");
        }
        assert_eq!(adjust_pvalues(&[0.2], Adjustment::Holm).unwrap(), vec![0.2]);
        assert!(adjust_pvalues(&[1.2], Adjustment::Holm).is_err());
    }

    proptest! {
        #[test]
        fn adjustments_match_reference(p in prop::collection::vec(0.0..=1.0f64, 1..12)) {
            for method in [Adjustment::Holm, Adjustment::BenjaminiHochberg] {
                let got = adjust_pvalues(&p, method).unwrap();
                let want = reference(&p, method);
                for (g, w) in got.iter().zip(&want) {
                    prop_assert!((g - w).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn adjustments_dominate(p in prop::collection::vec(0.0..=1.0f64, 1..12)) {
            let holm = adjust_pvalues(&p, Adjustment::Holm).unwrap();
            let bh = adjust_pvalues(&p, Adjustment::BenjaminiHochberg).unwrap();
            for i in 0..p.len() {
                prop_assert!(holm[i] >= p[i] - 1e-15 && bh[i] >= p[i] - 1e-15);
                prop_assert!(holm[i] >= bh[i] - 1e-15);
                prop_assert!(holm[i] <= 1.0 && bh[i] <= 1.0);
            }
        }
    }

    #[test]
    fn identical_vectors() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let t = paired_t_test(&v, &v, Alternative::TwoSided).unwrap();
        assert_eq!((t.statistic, t.p_value, t.degenerate), (0.0, 1.0, true));
        let s = permutation_test(&v, &v, 100, Alternative::TwoSided, 1).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert!(paired_t_test(&v[..2], &v[..2], Alternative::TwoSided).is_err());
        assert!(paired_t_test(&v, &v[..3], Alternative::TwoSided).is_err());
    }

    #[test]
    fn t_statistic_by_hand() {
        let before = [0.0; 4];
        let after = [1.0, 2.0, 3.0, 6.0];
        // mean 3, sd sqrt(14/3), t = 3 / sqrt(14/12)
        let t = paired_t_test(&before, &after, Alternative::Greater).unwrap();
        assert!((t.statistic - 3.0 / (14.0_f64 / 12.0).sqrt()).abs() < 1e-12);
        assert!(t.p_value > 0.0 && t.p_value < 0.05);
    }

    #[test]
    fn pfi_counterexample_is_significant() {
        let d = builtin("dgp_a").unwrap().sample(1_000, 2).unwrap();
        let m = FnModel::new("x1-x2", names(&["x1", "x2"]), |x| x[0] - x[1]).into_model();
        let r = pfi(m.as_ref(), &d, Loss::L2, 1, 3).unwrap();
        let zeros = vec![0.0; d.n()];
        let t = paired_t_test(&zeros, &r.features[0].per_instance, Alternative::Greater).unwrap();
        assert!(t.p_value < 0.001, "{t:?}");
    }

    #[test]
    fn sign_flip_agrees_with_t() {
        let seeds = SeedPolicy::new(9);
        let mut gaps: Vec<f64> = (0..50)
            .map(|trial| {
                let mut rng = seeds.rng(&[trial]);
                let d: Vec<f64> = (0..200).map(|_| 0.15 + { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
                let zeros = vec![0.0; 200];
                let t = paired_t_test(&zeros, &d, Alternative::TwoSided).unwrap();
                let s = permutation_test(&zeros, &d, 4_000, Alternative::TwoSided, trial).unwrap();
                (t.p_value - s.p_value).abs()
            })
            .collect();
        gaps.sort_by(f64::total_cmp);
        assert!(gaps[25] <= 0.02, "median gap {}", gaps[25]);
    }

    #[test]
    fn permutation_p_value_never_zero() {
        let before = [0.0; 10];
        let after = [5.0; 10];
        let s = permutation_test(&before, &after, 99, Alternative::Greater, 1).unwrap();
        assert!(s.p_value >= 0.01 && s.p_value < 0.05, "{}", s.p_value);
    }

    #[test]
    fn ci_separates_strong_effects() {
        let d = builtin("dgp_g").unwrap().sample(5_000, 4).unwrap();
        let cfg = MethodConfig::new(Method::Pfi).with_reps(3);
        let r = learner_fi_ci(&ols(), &d, Loss::L2, &cfg, 6, 0.95, 5).unwrap();
        let (a, b) = (&r.features[0], &r.features[1]);
        assert!(a.ci_high.unwrap() < b.ci_low.unwrap(), "{a:?} {b:?}");
        assert!(r.warnings.iter().any(|w| w.contains("nadeau-bengio")));
    }

    #[test]
    fn corrected_variance_exceeds_naive() {
        // with m = 2 the correction factor 1/2 + 3/7 exceeds 1/m = 1/2
        let d = builtin("dgp_g").unwrap().sample(300, 6).unwrap();
        let cfg = MethodConfig::new(Method::Loco);
        let r = learner_fi_ci(&ols(), &d, Loss::L2, &cfg, 2, 0.95, 7).unwrap();
        let seeds = SeedPolicy::new(7);
        let vals: Vec<f64> = (0..2u64)
            .map(|b| {
                let child = seeds.child(&[tag::RESAMPLE, b]);
                let (tr, te) = split_indices(300, 0.7, child).unwrap().apply(&d);
                cfg.evaluate(&ols(), &tr, &te, Loss::L2, child.derive(&[])).unwrap().features[1].estimate
            })
            .collect();
        let naive = (sample_var(&vals) / 2.0).sqrt();
        assert!((r.features[1].estimate - mean(&vals)).abs() < 1e-12);
        assert!(r.features[1].std_error > naive);
        assert!(learner_fi_ci(&ols(), &d, Loss::L2, &cfg, 1, 0.95, 7).is_err());
    }

    #[test]
    fn pimp_strong_and_floor() {
        let spec = builtin("dgp_c").unwrap().with_noise_features(1);
        let d = spec.sample(300, 8).unwrap();
        // PFI would extrapolate on the near-collinear X1, X2 under permuted targets
        let cfg = MethodConfig::new(Method::Loci);
        let r = pimp(&ols(), &d, Loss::L2, &cfg, 20, 9).unwrap();
        assert_eq!(r.nulls.m(), 20);
        assert_eq!(r.observed.features[0].p_value, Some(1.0 / 21.0));
        assert!(pimp(&ols(), &d, Loss::L2, &cfg, 19, 9).is_err());
    }
}
