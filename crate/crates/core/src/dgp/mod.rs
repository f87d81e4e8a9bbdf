//! Synthetic data-generating processes with known ground truth.
//!
//! Each built-in process can be sampled, answers conditional-independence
//! queries about its variables, and supplies closed-form Bayes-optimal
//! predictors `E[Y | X_S]` (equal to `P(Y = 1 | X_S)` for binary targets)
//! for every feature subset `S`.
//!
//! Normal distributions are parameterized by standard deviation throughout.

mod structure;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{FiError, Result};
use crate::learners::logistic_sigmoid;
use crate::loss::Loss;
use crate::model::{FnModel, Model};
use crate::seed::{tag, SeedPolicy};

pub use structure::Structure;

/// The generative mechanism of a built-in process.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// `Y, X1 ~ N(0,1)` independent, `X2 := X1`.
    Duplicate,
    /// `X1, X2 ~ Bern(0.5)`, `Y := X1 xor X2`.
    Xor,
    /// `Y := X1`, `X2 := X1 + N(0, 0.1)`.
    Chain,
    /// Five features: `X2 := X1 + N(0, 0.001)`, `X4 := X3 + N(0, 0.1)`,
    /// `Y := X4 + X5 + X4 X5 + N(0, 0.1)`.
    Illustrative,
    /// `Y | X1, X2 ~ N(X2, |X1|)`.
    Heteroskedastic,
    /// `X1, X2, Y ~ N(0,1)`, all independent.
    Irrelevant,
    /// `Y = sum_j beta_j X_j + N(0,1)` with independent standard normal features.
    Linear { betas: Vec<f64> },
    /// `Y ~ N(0,1)`, `X1, X2 := Y + N(0,1)`, `X3 ~ N(0,1)`.
    NaiveBayes,
    /// `X1, X2, X3 ~ N(0,1)`, `Y ~ Bern(sigmoid(2 X1 + X2))`.
    Logistic,
}

/// A synthetic process: mechanism plus optional appended noise features.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    name: String,
    mechanism: Mechanism,
    base_p: usize,
    noise_features: usize,
    structure: Structure,
    provenance: String,
}

pub const BUILTIN_NAMES: [&str; 10] =
    ["dgp_a", "dgp_b", "dgp_c", "dgp_d", "dgp_e", "dgp_f", "dgp_g", "dgp_g4", "dgp_h", "dgp_i"];

/// Look up a built-in process by name. A `+noiseK` suffix appends `K`
/// independent standard normal features, e.g. `dgp_c+noise1`.
pub fn builtin(name: &str) -> Result<DgpSpec> {
    if let Some((base, suffix)) = name.split_once('+') {
        let k = suffix
            .strip_prefix("noise")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| unknown(name))?;
        return Ok(builtin(base)?.with_noise_features(k));
    }
    let y = |p: usize| p;
    let spec = match name {
        "dgp_a" => DgpSpec::new(
            name,
            Mechanism::Duplicate,
            2,
            Structure::new(3).alias(1, 0),
            "Y is independent of both features; X2 is an exact copy of X1",
        ),
        "dgp_b" => DgpSpec::new(
            name,
            Mechanism::Xor,
            2,
            Structure::new(3).xor([0, 1, y(2)]),
            "XOR of fair coins: all three variables pairwise independent, each feature associated with Y given the other",
        ),
        "dgp_c" => DgpSpec::new(
            name,
            Mechanism::Chain,
            2,
            Structure::new(3).edge(0, 1).alias(y(2), 0),
            "Y equals X1; X2 is a noisy copy of X1 and carries no information on Y beyond X1",
        ),
        "dgp_d" => DgpSpec::new(
            name,
            Mechanism::Illustrative,
            5,
            Structure::new(6).edge(0, 1).edge(2, 3).edge(3, y(5)).edge(4, y(5)),
            "X3, X4, X5 unconditionally associated with Y; X5 strongly and X4 weakly (through its sd 0.1 noise) associated given all others; X1, X2 independent of Y",
        ),
        "dgp_e" => DgpSpec::new(
            name,
            Mechanism::Heteroskedastic,
            2,
            Structure::new(3).edge(0, y(2)).edge(1, y(2)),
            "X1 drives the spread of Y, X2 its mean; both associated with Y given any set",
        ),
        "dgp_f" => DgpSpec::new(
            name,
            Mechanism::Irrelevant,
            2,
            Structure::new(3),
            "all variables mutually independent",
        ),
        "dgp_g" => DgpSpec::linear(name, vec![1.0, 2.0]),
        "dgp_g4" => DgpSpec::linear(name, vec![1.0, 2.0, 0.5, 0.0]),
        "dgp_h" => DgpSpec::new(
            name,
            Mechanism::NaiveBayes,
            3,
            Structure::new(4).edge(y(3), 0).edge(y(3), 1),
            "X1, X2 are noisy measurements of Y and independent given Y; X3 is independent noise",
        ),
        "dgp_i" => DgpSpec::new(
            name,
            Mechanism::Logistic,
            3,
            Structure::new(4).edge(0, y(3)).edge(1, y(3)),
            "binary Y with logit 2 X1 + X2; X3 is independent noise",
        ),
        _ => return Err(unknown(name)),
    };
    Ok(spec)
}

fn unknown(name: &str) -> FiError {
    FiError::UnknownDgp { name: name.to_string(), available: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect() }
}

impl DgpSpec {
    fn new(name: &str, mechanism: Mechanism, base_p: usize, structure: Structure, provenance: &str) -> Self {
        Self { name: name.to_string(), mechanism, base_p, noise_features: 0, structure, provenance: provenance.to_string() }
    }

    /// Linear Gaussian benchmark with the given coefficients.
    pub fn linear(name: &str, betas: Vec<f64>) -> Self {
        let p = betas.len();
        let mut s = Structure::new(p + 1);
        for (j, b) in betas.iter().enumerate() {
            if *b != 0.0 {
                s = s.edge(j, p);
            }
        }
        let prov = format!("independent standard normal features, Y = sum beta_j X_j + N(0,1), beta = {betas:?}");
        Self::new(name, Mechanism::Linear { betas }, p, s, &prov)
    }

    pub fn with_noise_features(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.noise_features += k;
        out.name = format!("{}+noise{}", self.base_name(), out.noise_features);
        out.structure = self.structure.with_isolated_features(k);
        out
    }

    fn base_name(&self) -> &str {
        self.name.split('+').next().unwrap_or(&self.name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    pub fn p(&self) -> usize {
        self.base_p + self.noise_features
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn task(&self) -> Task {
        match self.mechanism {
            Mechanism::Xor | Mechanism::Logistic => Task::BinaryClassification,
            _ => Task::Regression,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.p()).map(|j| format!("x{j}")).collect()
    }

    /// Index of the target in independence queries.
    pub fn target_index(&self) -> usize {
        self.p()
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Is `A ⊥ B | C`, with the target addressed as [`DgpSpec::target_index`]?
    pub fn independent(&self, a: &[usize], b: &[usize], c: &[usize]) -> bool {
        self.structure.independent(a, b, c)
    }

    /// Draw `n` iid rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(crate::error::invalid("sample size must be at least 1"));
        }
        let mut rng = SeedPolicy::new(seed).rng(&[tag::DGP]);
        let p = self.p();
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let (mut x, yi) = self.draw(&mut rng);
            x.extend((0..self.noise_features).map(|_| normal(&mut rng, 1.0)));
            debug_assert_eq!(x.len(), p);
            rows.push(x);
            y.push(yi);
        }
        Dataset::from_rows(rows, self.feature_names(), y, self.task())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        match &self.mechanism {
            Mechanism::Duplicate => {
                let y = normal(rng, 1.0);
                let x1 = normal(rng, 1.0);
                (vec![x1, x1], y)
            }
            Mechanism::Xor => {
                let x1 = f64::from(u8::from(rng.random_bool(0.5)));
                let x2 = f64::from(u8::from(rng.random_bool(0.5)));
                (vec![x1, x2], f64::from(u8::from(x1 != x2)))
            }
            Mechanism::Chain => {
                let x1 = normal(rng, 1.0);
                (vec![x1, x1 + normal(rng, 0.1)], x1)
            }
            Mechanism::Illustrative => {
                let x1 = normal(rng, 1.0);
                let x3 = normal(rng, 1.0);
                let x5 = normal(rng, 1.0);
                let x2 = x1 + normal(rng, 0.001);
                let x4 = x3 + normal(rng, 0.1);
                let y = x4 + x5 + x4 * x5 + normal(rng, 0.1);
                (vec![x1, x2, x3, x4, x5], y)
            }
            Mechanism::Heteroskedastic => {
                let x1 = normal(rng, 1.0);
                let x2 = normal(rng, 1.0);
                (vec![x1, x2], x2 + x1.abs() * normal(rng, 1.0))
            }
            Mechanism::Irrelevant => {
                let x1 = normal(rng, 1.0);
                let x2 = normal(rng, 1.0);
                (vec![x1, x2], normal(rng, 1.0))
            }
            Mechanism::Linear { betas } => {
                let x: Vec<f64> = betas.iter().map(|_| normal(rng, 1.0)).collect();
                let y = x.iter().zip(betas).map(|(a, b)| a * b).sum::<f64>() + normal(rng, 1.0);
                (x, y)
            }
            Mechanism::NaiveBayes => {
                let y = normal(rng, 1.0);
                (vec![y + normal(rng, 1.0), y + normal(rng, 1.0), normal(rng, 1.0)], y)
            }
            Mechanism::Logistic => {
                let x: Vec<f64> = (0..3).map(|_| normal(rng, 1.0)).collect();
                let prob = logistic_sigmoid(2.0 * x[0] + x[1]);
                (x, f64::from(u8::from(rng.random_bool(prob))))
            }
        }
    }

    /// Analytic `E[Y]`.
    pub fn target_mean(&self) -> f64 {
        match self.mechanism {
            Mechanism::Xor | Mechanism::Logistic => 0.5,
            _ => 0.0,
        }
    }

    /// Analytic risk of `E[Y | X]` under L2 loss, where known.
    pub fn bayes_risk_l2(&self) -> Option<f64> {
        match &self.mechanism {
            Mechanism::Duplicate | Mechanism::Irrelevant => Some(1.0),
            Mechanism::Xor | Mechanism::Chain => Some(0.0),
            Mechanism::Illustrative => Some(0.01),
            Mechanism::Heteroskedastic => Some(1.0),
            Mechanism::Linear { .. } => Some(1.0),
            Mechanism::NaiveBayes => Some(1.0 / 3.0),
            Mechanism::Logistic => None,
        }
    }

    /// Closed-form `E[Y | X_S]` for the feature subset `subset` (indices).
    /// Returns the features actually read, in order, and the function of
    /// those values.
    pub fn conditional_expectation(&self, subset: &[usize]) -> Result<(Vec<usize>, ConditionalFn)> {
        let has = |j: usize| subset.contains(&j);
        if let Some(&bad) = subset.iter().find(|&&j| j >= self.p()) {
            return Err(crate::error::invalid(format!("feature index {bad} out of range for {}", self.name)));
        }
        let f: (Vec<usize>, ConditionalFn) = match &self.mechanism {
            Mechanism::Duplicate | Mechanism::Irrelevant => (vec![], Arc::new(|_: &[f64]| 0.0)),
            Mechanism::Xor => {
                if has(0) && has(1) {
                    (vec![0, 1], Arc::new(|x: &[f64]| f64::from(u8::from((x[0] > 0.5) != (x[1] > 0.5)))))
                } else {
                    (vec![], Arc::new(|_: &[f64]| 0.5))
                }
            }
            Mechanism::Chain => {
                if has(0) {
                    (vec![0], Arc::new(|x: &[f64]| x[0]))
                } else if has(1) {
                    // Cov(Y, X2) = 1, Var(X2) = 1.01
                    (vec![1], Arc::new(|x: &[f64]| x[0] / 1.01))
                } else {
                    (vec![], Arc::new(|_: &[f64]| 0.0))
                }
            }
            Mechanism::Illustrative => {
                // E[X4 | X_S]: x4 if observed, else x3 if observed, else 0
                let src4 = if has(3) {
                    Some(3)
                } else if has(2) {
                    Some(2)
                } else {
                    None
                };
                let src5 = has(4).then_some(4);
                let reads: Vec<usize> = src4.into_iter().chain(src5).collect();
                let (i4, i5) = (src4.map(|_| 0), src5.map(|_| usize::from(src4.is_some())));
                (
                    reads,
                    Arc::new(move |x: &[f64]| {
                        let m4 = i4.map_or(0.0, |k| x[k]);
                        let m5 = i5.map_or(0.0, |k| x[k]);
                        m4 + m5 + m4 * m5
                    }),
                )
            }
            Mechanism::Heteroskedastic => {
                if has(1) {
                    (vec![1], Arc::new(|x: &[f64]| x[0]))
                } else {
                    (vec![], Arc::new(|_: &[f64]| 0.0))
                }
            }
            Mechanism::Linear { betas } => {
                let reads: Vec<usize> = (0..betas.len()).filter(|&j| has(j) && betas[j] != 0.0).collect();
                let coefs: Vec<f64> = reads.iter().map(|&j| betas[j]).collect();
                (reads, Arc::new(move |x: &[f64]| x.iter().zip(&coefs).map(|(a, b)| a * b).sum()))
            }
            Mechanism::NaiveBayes => {
                let reads: Vec<usize> = [0, 1].into_iter().filter(|&j| has(j)).collect();
                let denom = reads.len() as f64 + 1.0;
                (reads, Arc::new(move |x: &[f64]| x.iter().sum::<f64>() / denom))
            }
            Mechanism::Logistic => {
                let reads: Vec<usize> = [0, 1].into_iter().filter(|&j| has(j)).collect();
                let coefs: Vec<f64> = reads.iter().map(|&j| if j == 0 { 2.0 } else { 1.0 }).collect();
                // variance of the unobserved part of the logit
                let var = if has(0) { 0.0 } else { 4.0 } + if has(1) { 0.0 } else { 1.0 };
                (
                    reads,
                    Arc::new(move |x: &[f64]| {
                        let eta: f64 = x.iter().zip(&coefs).map(|(a, b)| a * b).sum();
                        expected_sigmoid(eta, var)
                    }),
                )
            }
        };
        Ok(f)
    }

    /// Bayes-optimal predictor restricted to the named features, for L2 loss
    /// (conditional mean) or cross-entropy (conditional class probability).
    pub fn oracle(&self, loss: Loss, subset: &[String]) -> Result<Model> {
        let names = self.feature_names();
        let idx: Vec<usize> = subset
            .iter()
            .map(|s| names.iter().position(|n| n == s).ok_or_else(|| FiError::UnknownColumn(s.clone())))
            .collect::<Result<_>>()?;
        if matches!(loss, Loss::CrossEntropy { .. }) && self.task() != Task::BinaryClassification {
            return Err(FiError::UnsupportedOracle { dgp: self.name.clone(), subset: subset.to_vec() });
        }
        let (reads, f) = self.conditional_expectation(&idx)?;
        let inputs = reads.iter().map(|&j| names[j].clone()).collect();
        Ok(FnModel::new(format!("oracle[{}]", self.name), inputs, move |x| f(x)).into_model())
    }

    /// Association flags for every feature.
    pub fn ground_truth(&self) -> GroundTruth {
        let p = self.p();
        let y = self.target_index();
        let names = self.feature_names();
        let features = (0..p)
            .map(|j| {
                let rest: Vec<usize> = (0..p).filter(|&k| k != j).collect();
                let relative = if p <= 5 {
                    subsets(&rest)
                        .into_iter()
                        .map(|g| ConditionalFlag {
                            given: g.iter().map(|&k| names[k].clone()).collect(),
                            associated: !self.independent(&[j], &[y], &g),
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                FeatureTruth {
                    name: names[j].clone(),
                    unconditional: !self.independent(&[j], &[y], &[]),
                    conditional: !self.independent(&[j], &[y], &rest),
                    relative,
                }
            })
            .collect();
        GroundTruth { dgp: self.name.clone(), provenance: self.provenance.clone(), features }
    }
}

pub type ConditionalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

/// All subsets of `items`, in binary-counter order.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFlag {
    pub given: Vec<String>,
    pub associated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTruth {
    pub name: String,
    /// associated with Y marginally
    pub unconditional: bool,
    /// associated with Y given all other features
    pub conditional: bool,
    /// association given each conditioning set (only for p <= 5)
    pub relative: Vec<ConditionalFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dgp: String,
    pub provenance: String,
    pub features: Vec<FeatureTruth>,
}

impl GroundTruth {
    pub fn unconditional_set(&self) -> Vec<String> {
        self.features.iter().filter(|f| f.unconditional).map(|f| f.name.clone()).collect()
    }

    pub fn conditional_set(&self) -> Vec<String> {
        self.features.iter().filter(|f| f.conditional).map(|f| f.name.clone()).collect()
    }
}

/// Gauss-Hermite rule with 48 nodes (Golub-Welsch).
fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 48;
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            j[(k, k - 1)] = b;
            j[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], sqrt_pi * eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

/// `E[sigmoid(eta + Z)]` for `Z ~ N(0, var)`.
pub fn expected_sigmoid(eta: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return logistic_sigmoid(eta);
    }
    let (nodes, weights) = gauss_hermite();
    let s = (2.0 * var).sqrt();
    let total: f64 = weights.iter().sum();
    nodes.iter().zip(weights).map(|(t, w)| w * logistic_sigmoid(eta + s * t)).sum::<f64>() / total
}
