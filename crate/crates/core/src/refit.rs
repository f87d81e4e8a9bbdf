//! Refitting-based importance: LOCO, WVIM, surplus WVIM and LOCI.
//!
//! Every quantity is a difference of held-out risks of models refitted on
//! feature subsets. Fits are cached per (protocol unit, kept subset), so one
//! reference fit is shared by all queries in a run, and a refit's seed
//! depends only on the master seed, the unit and the kept subset. Hence
//! `wvim({j})` equals `loco(j)` and `swvim(j, ∅)` equals `loci(j)` exactly.
//! An empty kept subset is always fitted by the constant (mean) model.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};
use crate::exec;
use crate::learners::{fit_constant, Learner};
use crate::loss::Loss;
use crate::model::{check_finite, predict_dataset, Model};
use crate::result::{FIResult, ValueEstimate, DEFAULT_LEVEL};
use crate::seed::{subset_key, tag, SeedPolicy};
use crate::split::{kfold, split_indices, SplitIndices};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Protocol {
    Holdout { train_fraction: f64 },
    KFold { k: usize },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Holdout { train_fraction: DEFAULT_TRAIN_FRACTION }
    }
}

/// Learner, evaluation protocol and master seed of a refit analysis.
#[derive(Debug, Clone)]
pub struct RefitPlan {
    pub learner: Arc<dyn Learner>,
    pub protocol: Protocol,
    pub seed: u64,
}

impl RefitPlan {
    pub fn new(learner: Arc<dyn Learner>, protocol: Protocol, seed: u64) -> Self {
        Self { learner, protocol, seed }
    }

    pub fn holdout(learner: Arc<dyn Learner>, seed: u64) -> Self {
        Self::new(learner, Protocol::default(), seed)
    }
}

/// Refit engine over one dataset; caches held-out losses per kept subset.
#[derive(Debug)]
pub struct Refitter {
    plan: RefitPlan,
    loss: Loss,
    names: Vec<String>,
    units: Vec<(Dataset, Dataset)>,
    seeds: SeedPolicy,
    cache: Mutex<HashMap<Vec<usize>, Arc<Vec<f64>>>>,
}

impl Refitter {
    pub fn new(plan: RefitPlan, data: &Dataset, loss: Loss) -> Result<Self> {
        let seeds = SeedPolicy::new(plan.seed);
        let parts: Vec<SplitIndices> = match plan.protocol {
            Protocol::Holdout { train_fraction } => vec![split_indices(data.n(), train_fraction, seeds)?],
            Protocol::KFold { k } => kfold(data.n(), k, seeds)?,
        };
        let units = parts.iter().map(|s| s.apply(data)).collect();
        Self::from_units(plan, units, loss)
    }

    /// Refitter over explicit (train, test) pairs; the plan's protocol is ignored.
    pub fn from_units(plan: RefitPlan, units: Vec<(Dataset, Dataset)>, loss: Loss) -> Result<Self> {
        let Some((first, _)) = units.first() else {
            return Err(invalid("at least one train/test pair is needed"));
        };
        let names = first.names().to_vec();
        for (train, test) in &units {
            loss.check_task(train.task())?;
            if train.names() != names.as_slice() || test.names() != names.as_slice() {
                return Err(invalid("all train/test pairs must share the same columns"));
            }
        }
        let seeds = SeedPolicy::new(plan.seed);
        Ok(Self { plan, loss, names, units, seeds, cache: Mutex::new(HashMap::new()) })
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn seed(&self) -> u64 {
        self.plan.seed
    }

    /// Number of held-out rows over all protocol units.
    pub fn n_eval(&self) -> usize {
        self.units.iter().map(|(_, test)| test.n()).sum()
    }

    fn fit_unit(&self, u: usize, kept: &[usize]) -> Result<Vec<f64>> {
        let (train, test) = &self.units[u];
        let train = train.select_columns(kept);
        let test = test.select_columns(kept);
        let wrap = |e: FiError| FiError::Learner { subset: train.names().to_vec(), message: e.to_string() };
        let model: Model = if kept.is_empty() {
            fit_constant(&train).map_err(wrap)?.into()
        } else {
            let seed = self.seeds.derive(&[tag::REFIT, u as u64, subset_key(kept)]);
            self.plan.learner.fit(&train, seed).map_err(wrap)?
        };
        let preds = predict_dataset(model.as_ref(), &test)?;
        check_finite(&preds)?;
        Ok(test.target().iter().zip(&preds).map(|(&y, &f)| self.loss.eval(y, f)).collect())
    }

    /// Held-out per-instance losses of the model refitted on `kept`,
    /// concatenated over protocol units.
    pub fn losses(&self, kept: &[usize]) -> Result<Arc<Vec<f64>>> {
        let mut key = kept.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&j) = key.iter().find(|&&j| j >= self.p()) {
            return Err(invalid(format!("feature index {j} out of range (p = {})", self.p())));
        }
        if let Some(v) = self.cache.lock().expect("refit cache").get(&key) {
            return Ok(v.clone());
        }
        let per_unit = exec::try_map_indexed(self.units.len(), |u| self.fit_unit(u, &key))?;
        let v = Arc::new(per_unit.concat());
        self.cache.lock().expect("refit cache").insert(key, v.clone());
        Ok(v)
    }

    /// Fit several subsets concurrently to warm the cache.
    pub fn prefetch(&self, subsets: &[Vec<usize>]) -> Result<()> {
        exec::try_map_indexed(subsets.len(), |i| self.losses(&subsets[i]).map(|_| ()))?;
        Ok(())
    }

    fn diff(&self, worse: &[usize], better: &[usize]) -> Result<ValueEstimate> {
        let a = self.losses(worse)?;
        let b = self.losses(better)?;
        Ok(ValueEstimate::from_per_instance(a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()))
    }

    fn all(&self) -> Vec<usize> {
        (0..self.p()).collect()
    }

    fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.p() {
            return Err(invalid(format!("feature index {j} out of range (p = {})", self.p())));
        }
        Ok(())
    }

    /// `R(f_{-S}) - R(f)`.
    pub fn wvim(&self, dropped: &[usize]) -> Result<ValueEstimate> {
        let kept: Vec<usize> = self.all().into_iter().filter(|j| !dropped.contains(j)).collect();
        self.diff(&kept, &self.all())
    }

    /// `R(f_G) - R(f_{G ∪ {j}})`.
    pub fn swvim(&self, j: usize, given: &[usize]) -> Result<ValueEstimate> {
        self.check_feature(j)?;
        if given.contains(&j) {
            return Err(invalid("the conditioning set must not contain the feature of interest"));
        }
        let mut with = given.to_vec();
        with.push(j);
        self.diff(given, &with)
    }

    pub fn loco(&self, j: usize) -> Result<ValueEstimate> {
        if self.p() < 2 {
            return Err(invalid("LOCO needs at least two features"));
        }
        self.check_feature(j)?;
        self.wvim(&[j])
    }

    pub fn loci(&self, j: usize) -> Result<ValueEstimate> {
        self.check_feature(j)?;
        self.swvim(j, &[])
    }

    /// LOCO for every feature, sharing the reference fit.
    pub fn loco_all(&self) -> Result<FIResult> {
        let mut subsets = vec![self.all()];
        subsets.extend((0..self.p()).map(|j| self.all().into_iter().filter(|&k| k != j).collect()));
        self.prefetch(&subsets)?;
        self.collect("loco", |j| self.loco(j))
    }

    /// LOCI for every feature.
    pub fn loci_all(&self) -> Result<FIResult> {
        let mut subsets = vec![Vec::new()];
        subsets.extend((0..self.p()).map(|j| vec![j]));
        self.prefetch(&subsets)?;
        self.collect("loci", |j| self.loci(j))
    }

    /// Surplus WVIM for every feature over `given` (minus the feature).
    pub fn swvim_all(&self, given: &[usize]) -> Result<FIResult> {
        self.collect("swvim", |j| {
            let g: Vec<usize> = given.iter().copied().filter(|&k| k != j).collect();
            self.swvim(j, &g)
        })
    }

    fn collect(&self, method: &str, f: impl Fn(usize) -> Result<ValueEstimate>) -> Result<FIResult> {
        let mut out = FIResult::new(method, &self.loss, self.plan.seed);
        for j in 0..self.p() {
            out.features.push(f(j)?.into_record(&self.names[j]).with_wald_ci(DEFAULT_LEVEL));
        }
        Ok(out)
    }
}

pub fn loco(plan: &RefitPlan, data: &Dataset, loss: Loss) -> Result<FIResult> {
    Refitter::new(plan.clone(), data, loss)?.loco_all()
}

pub fn loci(plan: &RefitPlan, data: &Dataset, loss: Loss) -> Result<FIResult> {
    Refitter::new(plan.clone(), data, loss)?.loci_all()
}

pub fn wvim(plan: &RefitPlan, data: &Dataset, loss: Loss, dropped: &[usize]) -> Result<ValueEstimate> {
    Refitter::new(plan.clone(), data, loss)?.wvim(dropped)
}

pub fn swvim(plan: &RefitPlan, data: &Dataset, loss: Loss, j: usize, given: &[usize]) -> Result<ValueEstimate> {
    Refitter::new(plan.clone(), data, loss)?.swvim(j, given)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::dgp::builtin;
    use crate::learners::{LearnerKind, LearnerSpec, OracleLearner};
    use crate::model::names;

    fn ols() -> Arc<dyn Learner> {
        Arc::new(LearnerSpec::new(LearnerKind::Ols))
    }

    #[test]
    fn linear_gaussian_loco_and_loci() {
        let d = builtin("dgp_g").unwrap().sample(10_000, 1).unwrap();
        let r = Refitter::new(RefitPlan::holdout(ols(), 2), &d, Loss::L2).unwrap();
        let lo = r.loco_all().unwrap();
        let li = r.loci_all().unwrap();
        assert!((lo.features[0].estimate - 1.0).abs() < 0.15, "{:?}", lo.features[0]);
        assert!((lo.features[1].estimate - 4.0).abs() < 0.3);
        assert!((li.features[0].estimate - 1.0).abs() < 0.15);
        assert!((li.features[1].estimate - 4.0).abs() < 0.3);
        let all = r.wvim(&[0, 1]).unwrap();
        assert!((all.value - 5.0).abs() < 0.4, "{}", all.value);
    }

    #[test]
    fn identities_hold_bitwise() {
        let d = builtin("dgp_g4").unwrap().sample(600, 3).unwrap();
        let mut spec = LearnerSpec::new(LearnerKind::BaggedTrees);
        spec.trees.n_trees = 5;
        let plan = RefitPlan::new(Arc::new(spec), Protocol::KFold { k: 3 }, 4);
        let a = Refitter::new(plan.clone(), &d, Loss::L2).unwrap();
        let b = Refitter::new(plan, &d, Loss::L2).unwrap();
        for j in 0..4 {
            assert_eq!(a.wvim(&[j]).unwrap(), b.loco(j).unwrap());
            assert_eq!(a.swvim(j, &[]).unwrap(), b.loci(j).unwrap());
            let rest: Vec<usize> = (0..4).filter(|&k| k != j).collect();
            assert_eq!(a.swvim(j, &rest).unwrap(), b.loco(j).unwrap());
        }
    }

    #[test]
    fn redundant_copies_have_zero_loco() {
        // X2 := X1 and Y = X1 + noise: either copy can stand in for the other
        let base = builtin("dgp_a").unwrap().sample(2_000, 5).unwrap();
        let y: Vec<f64> = (0..base.n()).map(|i| base.value(i, 0) + base.target()[i]).collect();
        let d = base.with_target(y).unwrap();
        let lo = loco(&RefitPlan::holdout(ols(), 6), &d, Loss::L2).unwrap();
        for f in &lo.features {
            assert!(f.estimate.abs() < 0.01, "{f:?}");
        }
    }

    #[test]
    fn chain_surplus() {
        let d = builtin("dgp_c").unwrap().sample(4_000, 7).unwrap();
        let r = Refitter::new(RefitPlan::holdout(ols(), 8), &d, Loss::L2).unwrap();
        let given_x1 = r.swvim(1, &[0]).unwrap();
        assert!(given_x1.value.abs() <= 3.0 * given_x1.std_error + 1e-6, "{given_x1:?}");
        let alone = r.swvim(1, &[]).unwrap();
        assert!(alone.value > 3.0 * alone.std_error);
    }

    #[test]
    fn illustrative_groups() {
        let d = builtin("dgp_d").unwrap().sample(5_000, 9).unwrap();
        let r = Refitter::new(
            RefitPlan::holdout(Arc::new(LearnerSpec::new(LearnerKind::OlsInteractions)), 10),
            &d,
            Loss::L2,
        )
        .unwrap();
        let g34 = r.wvim(&[2, 3]).unwrap();
        assert!(g34.value > 0.5);
        let g12 = r.wvim(&[0, 1]).unwrap();
        assert!(g12.value.abs() <= 3.0 * g12.std_error + 1e-4, "{g12:?}");
        let lo = r.loco_all().unwrap();
        let rel = lo.relative_importance();
        assert_eq!(rel[4], 1.0);
        assert!(rel[..3].iter().all(|v| *v <= 0.05), "{rel:?}");
        let li = r.loci_all().unwrap().relative_importance();
        assert!(li[2..].iter().all(|v| *v > 0.1) && li[..2].iter().all(|v| *v < 0.05), "{li:?}");
    }

    #[test]
    fn oracle_refits_use_the_dgp() {
        let spec = builtin("dgp_g").unwrap();
        let d = spec.sample(5_000, 11).unwrap();
        let plan = RefitPlan::holdout(Arc::new(OracleLearner::new(spec, Loss::L2)), 12);
        let lo = loco(&plan, &d, Loss::L2).unwrap();
        assert!((lo.features[1].estimate - 4.0).abs() < 0.4);
    }

    #[test]
    fn learner_errors_name_the_subset() {
        let d = Dataset::from_rows(vec![vec![1.0, 2.0]; 10], names(&["a", "b"]), vec![0.5; 10], Task::Regression).unwrap();
        let plan = RefitPlan::holdout(Arc::new(LearnerSpec::new(LearnerKind::Logistic)), 1);
        match loco(&plan, &d, Loss::L2) {
            Err(FiError::Learner { subset, .. }) => assert!(!subset.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
