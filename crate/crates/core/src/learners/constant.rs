use std::sync::Arc;

use crate::data::Dataset;
use crate::error::Result;
use crate::model::{Model, Predictor};

/// Predicts the training target mean (regression) or base rate
/// (classification) everywhere.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    inputs: Vec<String>,
    pub value: f64,
}

impl ConstantModel {
    pub fn new(value: f64) -> Self {
        Self { inputs: Vec::new(), value }
    }
}

impl Predictor for ConstantModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

impl From<ConstantModel> for Model {
    fn from(m: ConstantModel) -> Model {
        Arc::new(m)
    }
}

pub fn fit_constant(data: &Dataset) -> Result<ConstantModel> {
    Ok(ConstantModel::new(super::target_mean(data)))
}
