//! Fitting procedures (learners) and the fitted models they return.

mod constant;
mod knn;
mod logistic;
mod ols;
mod oracle;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};
use crate::model::Model;

pub use constant::{fit_constant, ConstantModel};
pub use knn::{fit_knn, KnnModel};
pub use logistic::{fit_logistic, LogisticModel};
pub(crate) use logistic::sigmoid as logistic_sigmoid;
pub use ols::{fit_ols, OlsModel, RIDGE_LAMBDA};
pub use oracle::{oracle_model, OracleLearner};
pub use tree::{fit_bagged_trees, BaggedTrees, RegressionTree, TreeParams};

/// A fitting procedure mapping a dataset to a prediction model.
///
/// The feature set of the returned model is exactly the dataset's columns,
/// so refitting on a subset is `fit(&data.select_columns(..), seed)`.
pub trait Learner: Send + Sync + fmt::Debug {
    fn id(&self) -> String;

    fn fit(&self, data: &Dataset, seed: u64) -> Result<Model>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Constant,
    Ols,
    OlsInteractions,
    Knn,
    BaggedTrees,
    Logistic,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Constant,
        LearnerKind::Ols,
        LearnerKind::OlsInteractions,
        LearnerKind::Knn,
        LearnerKind::BaggedTrees,
        LearnerKind::Logistic,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            LearnerKind::Constant => "constant",
            LearnerKind::Ols => "ols",
            LearnerKind::OlsInteractions => "ols-interactions",
            LearnerKind::Knn => "knn",
            LearnerKind::BaggedTrees => "bagged-trees",
            LearnerKind::Logistic => "logistic",
        }
    }
}

impl FromStr for LearnerKind {
    type Err = FiError;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL.into_iter().find(|k| k.id() == s).ok_or_else(|| {
            let ids: Vec<_> = LearnerKind::ALL.iter().map(|k| k.id()).collect();
            invalid(format!("unknown learner '{s}' (available: {})", ids.join(", ")))
        })
    }
}

/// A built-in learner together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default)]
    pub trees: TreeParams,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_knn_k() -> usize {
    10
}
fn default_max_iter() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-6
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, knn_k: default_knn_k(), trees: TreeParams::default(), max_iter: default_max_iter(), tol: default_tol() }
    }
}

impl Learner for LearnerSpec {
    fn id(&self) -> String {
        self.kind.id().to_string()
    }

    fn fit(&self, data: &Dataset, seed: u64) -> Result<Model> {
        let model: Model = match self.kind {
            LearnerKind::Constant => fit_constant(data)?.into(),
            LearnerKind::Ols => fit_ols(data, false)?.into(),
            LearnerKind::OlsInteractions => fit_ols(data, true)?.into(),
            LearnerKind::Knn => fit_knn(data, self.knn_k)?.into(),
            LearnerKind::BaggedTrees => fit_bagged_trees(data, &self.trees, seed)?.into(),
            LearnerKind::Logistic => fit_logistic(data, self.max_iter, self.tol)?.into(),
        };
        Ok(model)
    }
}

/// Mean of the target, i.e. the L2 and cross-entropy optimal constant.
pub(crate) fn target_mean(data: &Dataset) -> f64 {
    data.target().iter().sum::<f64>() / data.n() as f64
}

/// Per-column mean and standard deviation (sd 1 for constant columns).
pub(crate) fn standardization(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let n = data.n() as f64;
    (0..data.p())
        .map(|j| {
            let col = data.features().column(j).to_owned();
            let m = col.sum() / n;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let sd = if v > 0.0 { v.sqrt() } else { 1.0 };
            (m, sd)
        })
        .unzip()
}
