use crate::data::Dataset;
use crate::dgp::DgpSpec;
use crate::error::Result;
use crate::loss::Loss;
use crate::model::Model;

use super::Learner;

/// Bayes-optimal predictor of `dgp` restricted to the named features.
pub fn oracle_model(dgp: &DgpSpec, loss: Loss, subset: &[String]) -> Result<Model> {
    dgp.oracle(loss, subset)
}

/// A "learner" that ignores the training rows and returns the DGP's oracle
/// for whatever columns it is given. Lets refit methods run under the
/// optimality assumptions of the theory.
#[derive(Debug, Clone)]
pub struct OracleLearner {
    pub dgp: DgpSpec,
    pub loss: Loss,
}

impl OracleLearner {
    pub fn new(dgp: DgpSpec, loss: Loss) -> Self {
        Self { dgp, loss }
    }
}

impl Learner for OracleLearner {
    fn id(&self) -> String {
        format!("oracle[{}]", self.dgp.name())
    }

    fn fit(&self, data: &Dataset, _seed: u64) -> Result<Model> {
        oracle_model(&self.dgp, self.loss, data.names())
    }
}
