//! Replacement-value generators for perturbation and marginalization.
//!
//! A sampler is fitted on a dataset for a block of target columns `T` and a
//! conditioning set `G`, then conditioned on rows (values of `X_G`) to give
//! per-row draw distributions for `X_T`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};

/// Diagonal jitter added to covariance blocks before factorization.
pub const JITTER: f64 = 1e-9;
pub const DEFAULT_KNN_K: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SamplerKind {
    /// Marginal permutation; only valid with an empty conditioning set.
    Permutation,
    Gaussian,
    Knn { k: usize },
}

impl SamplerKind {
    pub fn knn() -> Self {
        SamplerKind::Knn { k: DEFAULT_KNN_K }
    }

    pub fn id(&self) -> String {
        match self {
            SamplerKind::Permutation => "permutation".into(),
            SamplerKind::Gaussian => "gaussian".into(),
            SamplerKind::Knn { k } => format!("knn-{k}"),
        }
    }
}

impl FromStr for SamplerKind {
    type Err = FiError;

    /// `permutation`, `gaussian`, `knn` or `knn-<k>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(SamplerKind::Permutation),
            "gaussian" => Ok(SamplerKind::Gaussian),
            "knn" => Ok(SamplerKind::knn()),
            _ => s
                .strip_prefix("knn-")
                .and_then(|k| k.parse().ok())
                .map(|k| SamplerKind::Knn { k })
                .ok_or_else(|| invalid(format!("unknown sampler '{s}' (available: permutation, gaussian, knn, knn-<k>)"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    /// rows of `X_T` from the fitting data, row-major
    Permutation { values: Vec<f64> },
    Gaussian {
        mu_t: DVector<f64>,
        mu_g: DVector<f64>,
        /// `Sigma_TG Sigma_GG^{-1}`
        coef: DMatrix<f64>,
        /// lower Cholesky factor of the conditional covariance
        chol: DMatrix<f64>,
        cond_cov: DMatrix<f64>,
    },
    Knn {
        k: usize,
        g_mean: Vec<f64>,
        g_sd: Vec<f64>,
        /// standardized `X_G` of the fitting rows, row-major
        points: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A sampler for `X_T | X_G` fitted on one dataset.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    kind: SamplerKind,
    targets: Vec<usize>,
    given: Vec<usize>,
    n_fit: usize,
    fitted: Fitted,
}

impl ConditionalSampler {
    /// Fit on `data` for target columns `targets` given columns `given`.
    /// Never reads the target variable `Y`.
    pub fn fit(kind: SamplerKind, data: &Dataset, targets: &[usize], given: &[usize]) -> Result<Self> {
        let p = data.p();
        if targets.is_empty() {
            return Err(invalid("sampler needs at least one target column"));
        }
        if let Some(&c) = targets.iter().chain(given).find(|&&c| c >= p) {
            return Err(invalid(format!("column index {c} out of range (p = {p})")));
        }
        if targets.iter().any(|t| given.contains(t)) {
            return Err(invalid("target and conditioning columns overlap"));
        }
        let n = data.n();
        let fitted = match kind {
            SamplerKind::Permutation => {
                if !given.is_empty() {
                    return Err(invalid("the permutation sampler cannot condition on features; use gaussian or knn"));
                }
                Fitted::Permutation { values: gather(data, targets) }
            }
            SamplerKind::Gaussian => fit_gaussian(data, targets, given)?,
            SamplerKind::Knn { k } => {
                if k == 0 || k > n {
                    return Err(invalid(format!("knn sampler needs 1 <= k <= n ({n}), got {k}")));
                }
                let mut g_mean = Vec::with_capacity(given.len());
                let mut g_sd = Vec::with_capacity(given.len());
                for &g in given {
                    let col = data.column(g);
                    let m = col.iter().sum::<f64>() / n as f64;
                    let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                    g_mean.push(m);
                    g_sd.push(if v > 0.0 { v.sqrt() } else { 1.0 });
                }
                let mut points = Vec::with_capacity(n * given.len());
                for i in 0..n {
                    let row = data.row(i);
                    points.extend(given.iter().enumerate().map(|(a, &g)| (row[g] - g_mean[a]) / g_sd[a]));
                }
                Fitted::Knn { k, g_mean, g_sd, points, values: gather(data, targets) }
            }
        };
        Ok(Self { kind, targets: targets.to_vec(), given: given.to_vec(), n_fit: n, fitted })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn given(&self) -> &[usize] {
        &self.given
    }

    /// Draw distribution of `X_T` for one row with conditioning values
    /// `x_given` (in the order of [`ConditionalSampler::given`]).
    pub fn row(&self, x_given: &[f64]) -> RowSampler<'_> {
        let t = self.targets.len();
        match &self.fitted {
            Fitted::Permutation { values } => RowSampler::Uniform { values, t },
            Fitted::Gaussian { mu_t, mu_g, coef, chol, .. } => {
                let mut mean = mu_t.clone();
                if !x_given.is_empty() {
                    let dx = DVector::from_iterator(x_given.len(), x_given.iter().zip(mu_g.iter()).map(|(x, m)| x - m));
                    mean += coef * dx;
                }
                RowSampler::Gaussian { mean: mean.as_slice().to_vec(), chol }
            }
            Fitted::Knn { k, g_mean, g_sd, points, values } => {
                if self.given.is_empty() || *k >= self.n_fit {
                    return RowSampler::Uniform { values, t };
                }
                let g = self.given.len();
                let z: Vec<f64> = x_given.iter().enumerate().map(|(a, x)| (x - g_mean[a]) / g_sd[a]).collect();
                let dist: Vec<f64> = points
                    .chunks_exact(g)
                    .map(|row| row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect();
                let mut sorted = dist.clone();
                sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
                let cutoff = sorted[k - 1];
                // neighbours tied with the k-th distance are all kept, so
                // discrete conditioning variables are handled symmetrically
                let idx: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] <= cutoff).collect();
                RowSampler::Neighbors { idx, values, t }
            }
        }
    }

    /// Condition on every row of `data` (column indices as at fit time).
    pub fn condition(&self, data: &Dataset) -> Result<Conditioned<'_>> {
        if data.p() <= self.targets.iter().chain(&self.given).copied().max().unwrap_or(0) {
            return Err(FiError::DimensionMismatch { expected: self.targets.len() + self.given.len(), got: data.p() });
        }
        if let Fitted::Permutation { values } = &self.fitted {
            if data.n() != self.n_fit {
                return Err(invalid("the permutation sampler must be applied to the data it was fitted on"));
            }
            return Ok(Conditioned::Permutation { values, t: self.targets.len() });
        }
        let rows = crate::exec::map_indexed(data.n(), |i| {
            let row = data.row(i);
            let xg: Vec<f64> = self.given.iter().map(|&g| row[g]).collect();
            self.row(&xg)
        });
        Ok(Conditioned::Rows { rows, t: self.targets.len() })
    }

    /// Fitted Gaussian moments `(conditional coefficient, conditional
    /// covariance)`, if this is a Gaussian sampler.
    pub fn gaussian_moments(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.fitted {
            Fitted::Gaussian { coef, cond_cov, .. } => Some((coef, cond_cov)),
            _ => None,
        }
    }

    /// Compare fitted conditional moments against analytic values.
    pub fn diagnostics(&self, true_coef: &DMatrix<f64>, true_cond_cov: &DMatrix<f64>) -> Result<SamplerDiagnostics> {
        let (coef, cov) = self.gaussian_moments().ok_or_else(|| invalid("diagnostics need a gaussian sampler"))?;
        if coef.shape() != true_coef.shape() || cov.shape() != true_cond_cov.shape() {
            return Err(invalid("analytic moments have the wrong shape"));
        }
        Ok(SamplerDiagnostics {
            coef_max_error: (coef - true_coef).abs().max(),
            cov_max_error: (cov - true_cond_cov).abs().max(),
        })
    }
}

/// Largest absolute errors of fitted conditional moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub coef_max_error: f64,
    pub cov_max_error: f64,
}

fn gather(data: &Dataset, cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.n() * cols.len());
    for i in 0..data.n() {
        let row = data.row(i);
        out.extend(cols.iter().map(|&c| row[c]));
    }
    out
}

fn fit_gaussian(data: &Dataset, targets: &[usize], given: &[usize]) -> Result<Fitted> {
    let n = data.n() as f64;
    let cols: Vec<usize> = targets.iter().chain(given).copied().collect();
    let means: Vec<f64> = cols.iter().map(|&c| data.column(c).iter().sum::<f64>() / n).collect();
    let q = cols.len();
    let mut cov = DMatrix::<f64>::zeros(q, q);
    for i in 0..data.n() {
        let row = data.row(i);
        for a in 0..q {
            let da = row[cols[a]] - means[a];
            for b in a..q {
                cov[(a, b)] += da * (row[cols[b]] - means[b]);
            }
        }
    }
    for a in 0..q {
        for b in a..q {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let t = targets.len();
    let g = given.len();
    let s_tt = cov.view((0, 0), (t, t)).into_owned();
    let (coef, cond_cov) = if g == 0 {
        (DMatrix::zeros(t, 0), s_tt)
    } else {
        let s_tg = cov.view((0, t), (t, g)).into_owned();
        let s_gg = cov.view((t, t), (g, g)).into_owned() + DMatrix::identity(g, g) * JITTER;
        let chol_gg = s_gg.cholesky().ok_or_else(|| singular(data, given))?;
        // coef = S_tg S_gg^{-1}  <=>  S_gg coef^T = S_gt
        let coef = chol_gg.solve(&s_tg.transpose()).transpose();
        let cond = &s_tt - &coef * s_tg.transpose();
        (coef, cond)
    };
    let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
    let jittered = &cond_cov + DMatrix::identity(t, t) * JITTER;
    let chol = match jittered.clone().cholesky() {
        Some(c) => c.l(),
        // numerically negative conditional variance (exact collinearity):
        // clamp the spectrum at zero
        None => psd_root(&jittered),
    };
    Ok(Fitted::Gaussian {
        mu_t: DVector::from_column_slice(&means[..t]),
        mu_g: DVector::from_column_slice(&means[t..]),
        coef,
        chol,
        cond_cov,
    })
}

fn psd_root(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

fn singular(data: &Dataset, given: &[usize]) -> FiError {
    FiError::SingularCovariance { given: given.iter().map(|&g| data.names()[g].clone()).collect() }
}

/// Draw distribution for one row.
#[derive(Debug, Clone)]
pub enum RowSampler<'a> {
    /// uniform over the fitting rows
    Uniform { values: &'a [f64], t: usize },
    /// uniform over a neighbour set
    Neighbors { idx: Vec<usize>, values: &'a [f64], t: usize },
    Gaussian { mean: Vec<f64>, chol: &'a DMatrix<f64> },
}

impl RowSampler<'_> {
    /// Write one draw of `X_T` into `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            RowSampler::Uniform { values, t } => {
                let r = rng.random_range(0..values.len() / t);
                out.copy_from_slice(&values[r * t..(r + 1) * t]);
            }
            RowSampler::Neighbors { idx, values, t } => {
                let r = idx[rng.random_range(0..idx.len())];
                out.copy_from_slice(&values[r * t..(r + 1) * t]);
            }
            RowSampler::Gaussian { mean, chol } => {
                let t = mean.len();
                let z: Vec<f64> = (0..t).map(|_| StandardNormal.sample(rng)).collect();
                for a in 0..t {
                    out[a] = mean[a] + (0..=a).map(|b| chol[(a, b)] * z[b]).sum::<f64>();
                }
            }
        }
    }
}

/// A sampler conditioned on every row of an evaluation dataset.
#[derive(Debug, Clone)]
pub enum Conditioned<'a> {
    Permutation { values: &'a [f64], t: usize },
    Rows { rows: Vec<RowSampler<'a>>, t: usize },
}

impl Conditioned<'_> {
    /// One replacement block, `n x |T|` row-major.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Conditioned::Permutation { values, t } => {
                let n = values.len() / t;
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                let mut out = Vec::with_capacity(values.len());
                for r in perm {
                    out.extend_from_slice(&values[r * t..(r + 1) * t]);
                }
                out
            }
            Conditioned::Rows { rows, t } => {
                let mut out = vec![0.0; rows.len() * t];
                for (row, chunk) in rows.iter().zip(out.chunks_exact_mut(*t)) {
                    row.draw(rng, chunk);
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::model::names;
    use crate::seed::SeedPolicy;
    use proptest::prelude::*;

    fn bivariate(n: usize, rho: f64, seed: u64) -> Dataset {
        let mut rng = SeedPolicy::new(seed).rng(&[0]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![rho * b + (1.0 - rho * rho).sqrt() * a, b]
            })
            .collect();
        Dataset::from_rows(rows, names(&["x1", "x2"]), vec![0.0; n], Task::Regression).unwrap()
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn permutation_preserves_multiset() {
        let d = Dataset::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]], names(&["a"]), vec![0.0; 3], Task::Regression)
            .unwrap();
        let s = ConditionalSampler::fit(SamplerKind::Permutation, &d, &[0], &[]).unwrap();
        let mut draw = s.condition(&d).unwrap().draw(&mut SeedPolicy::new(3).rng(&[1]));
        draw.sort_by(f64::total_cmp);
        assert_eq!(draw, vec![1.0, 2.0, 3.0]);
        assert!(ConditionalSampler::fit(SamplerKind::Permutation, &d, &[0], &[0]).is_err());
    }

    #[test]
    fn gaussian_conditional_moments() {
        let d = bivariate(20_000, 0.8, 1);
        let s = ConditionalSampler::fit(SamplerKind::Gaussian, &d, &[0], &[1]).unwrap();
        let row = s.row(&[1.0]);
        let mut rng = SeedPolicy::new(2).rng(&[]);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut out = [0.0];
                row.draw(&mut rng, &mut out);
                out[0]
            })
            .collect();
        let (m, v) = mean_var(&draws);
        assert!((m - 0.8).abs() < 0.03, "{m}");
        assert!((v - 0.36).abs() < 0.03, "{v}");
        let diag = s
            .diagnostics(&DMatrix::from_element(1, 1, 0.8), &DMatrix::from_element(1, 1, 0.36))
            .unwrap();
        assert!(diag.coef_max_error < 0.03 && diag.cov_max_error < 0.03, "{diag:?}");
    }

    #[test]
    fn gaussian_moment_error_shrinks_with_n() {
        let err = |n: usize| {
            // average over seeds to smooth the comparison
            (0..8)
                .map(|seed| {
                    let d = bivariate(n, 0.8, 100 + seed);
                    let s = ConditionalSampler::fit(SamplerKind::Gaussian, &d, &[0], &[1]).unwrap();
                    s.diagnostics(&DMatrix::from_element(1, 1, 0.8), &DMatrix::from_element(1, 1, 0.36))
                        .unwrap()
                        .coef_max_error
                })
                .sum::<f64>()
                / 8.0
        };
        let (small, large) = (err(1_000), err(16_000));
        // 1/sqrt(n) predicts a ratio of 4
        assert!(small / large > 2.0, "{small} {large}");
    }

    #[test]
    fn gaussian_without_conditioning_matches_column_moments() {
        let d = bivariate(5_000, 0.5, 4);
        let s = ConditionalSampler::fit(SamplerKind::Gaussian, &d, &[1], &[]).unwrap();
        let c = s.condition(&d).unwrap();
        let mut rng = SeedPolicy::new(5).rng(&[]);
        let draws: Vec<f64> = (0..10).flat_map(|_| c.draw(&mut rng)).collect();
        let (m0, v0) = mean_var(&d.column(1));
        let (m, v) = mean_var(&draws);
        assert!((m - m0).abs() < 0.03 && (v - v0).abs() < 0.05);
    }

    #[test]
    fn gaussian_near_copy_has_tiny_spread() {
        let dgp = crate::dgp::builtin("dgp_d").unwrap();
        let d = dgp.sample(10_000, 3).unwrap();
        let s = ConditionalSampler::fit(SamplerKind::Gaussian, &d, &[1], &[0]).unwrap();
        let (_, cov) = s.gaussian_moments().unwrap();
        let sd = cov[(0, 0)].sqrt();
        assert!((sd - 0.001).abs() < 1e-4, "{sd}");
    }

    #[test]
    fn exact_copy_is_reproduced() {
        let d = crate::dgp::builtin("dgp_a").unwrap().sample(1_000, 1).unwrap();
        let s = ConditionalSampler::fit(SamplerKind::Gaussian, &d, &[0], &[1]).unwrap();
        let draw = s.condition(&d).unwrap().draw(&mut SeedPolicy::new(0).rng(&[]));
        let x2 = d.column(1);
        assert!(draw.iter().zip(&x2).all(|(a, b)| (a - b).abs() < 1e-3));
    }

    #[test]
    fn knn_k1_returns_own_value() {
        let d = bivariate(200, 0.8, 6);
        let s = ConditionalSampler::fit(SamplerKind::Knn { k: 1 }, &d, &[0], &[1]).unwrap();
        let draw = s.condition(&d).unwrap().draw(&mut SeedPolicy::new(0).rng(&[]));
        assert_eq!(draw, d.column(0));
        assert!(ConditionalSampler::fit(SamplerKind::Knn { k: 201 }, &d, &[0], &[1]).is_err());
    }

    #[test]
    fn knn_conditional_mean_curve() {
        let d = bivariate(20_000, 0.8, 7);
        let s = ConditionalSampler::fit(SamplerKind::Knn { k: 25 }, &d, &[0], &[1]).unwrap();
        let mut rng = SeedPolicy::new(8).rng(&[]);
        // the curve at each grid point is the mean draw over queries in a
        // small window, so it reflects the sampler rather than one
        // neighbourhood's noise
        for x2 in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let mut total = 0.0;
            let queries = 400;
            for q in 0..queries {
                let row = s.row(&[x2 - 0.05 + 0.1 * q as f64 / queries as f64]);
                for _ in 0..10 {
                    let mut out = [0.0];
                    row.draw(&mut rng, &mut out);
                    total += out[0];
                }
            }
            let mean = total / (10 * queries) as f64;
            assert!((mean - 0.8 * x2).abs() <= 0.1, "x2={x2}: {mean}");
        }
    }

    #[test]
    fn knn_with_k_n_is_marginal() {
        let d = bivariate(50, 0.8, 9);
        let s = ConditionalSampler::fit(SamplerKind::Knn { k: 50 }, &d, &[0], &[1]).unwrap();
        assert!(matches!(s.row(&[0.3]), RowSampler::Uniform { .. }));
    }

    #[test]
    fn sampler_parsing() {
        assert_eq!("knn-7".parse::<SamplerKind>().unwrap(), SamplerKind::Knn { k: 7 });
        assert_eq!("knn".parse::<SamplerKind>().unwrap(), SamplerKind::Knn { k: DEFAULT_KNN_K });
        assert!("foo".parse::<SamplerKind>().is_err());
    }

    proptest! {
        #[test]
        fn permutation_is_a_permutation(values in proptest::collection::vec(-1e3f64..1e3, 1..40), seed in any::<u64>()) {
            let n = values.len();
            let rows = values.iter().map(|v| vec![*v]).collect();
            let d = Dataset::from_rows(rows, names(&["a"]), vec![0.0; n], Task::Regression).unwrap();
            let s = ConditionalSampler::fit(SamplerKind::Permutation, &d, &[0], &[]).unwrap();
            let mut draw = s.condition(&d).unwrap().draw(&mut SeedPolicy::new(seed).rng(&[]));
            let mut orig = values.clone();
            draw.sort_by(f64::total_cmp);
            orig.sort_by(f64::total_cmp);
            prop_assert_eq!(draw, orig);
        }
    }
}
