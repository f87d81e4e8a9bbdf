//! Fitted prediction functions and how they are evaluated on datasets.

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{FiError, Result};

/// A fitted, pure prediction function over a named, ordered feature subset.
///
/// For regression `predict` returns the point prediction; for binary
/// classification it returns the probability of class 1.
pub trait Predictor: Send + Sync + fmt::Debug {
    /// Feature names the model reads, in the order `predict` expects them.
    fn inputs(&self) -> &[String];

    fn predict(&self, x: &[f64]) -> f64;

    /// Diagnostics recorded at fit time (ridge fallback, non-convergence).
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

pub type Model = Arc<dyn Predictor>;

type RowFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A model defined by a closure, used for hand-specified models such as
/// `f(x) = x1 - x2` and for closed-form oracles.
#[derive(Clone)]
pub struct FnModel {
    label: String,
    inputs: Vec<String>,
    f: RowFn,
}

impl FnModel {
    pub fn new(label: impl Into<String>, inputs: Vec<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), inputs, f: Arc::new(f) }
    }

    pub fn into_model(self) -> Model {
        Arc::new(self)
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("label", &self.label).field("inputs", &self.inputs).finish()
    }
}

impl Predictor for FnModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Column positions in `data` of each model input.
pub fn bind(model: &dyn Predictor, data: &Dataset) -> Result<Vec<usize>> {
    model.inputs().iter().map(|name| data.column_index(name)).collect()
}

/// Evaluates a model on rows of a dataset, optionally overriding some
/// dataset columns with replacement values.
#[derive(Debug, Clone)]
pub struct BoundModel<'a> {
    model: &'a dyn Predictor,
    cols: Vec<usize>,
}

impl<'a> BoundModel<'a> {
    pub fn new(model: &'a dyn Predictor, data: &Dataset) -> Result<Self> {
        Ok(Self { model, cols: bind(model, data)? })
    }

    pub fn model(&self) -> &'a dyn Predictor {
        self.model
    }

    /// Dataset columns read by the model.
    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    pub fn reads(&self, col: usize) -> bool {
        self.cols.contains(&col)
    }

    /// Prediction for row `i`; `replace(col)` may supply a substitute value.
    #[inline]
    pub fn predict_row_with(&self, data: &Dataset, i: usize, buf: &mut Vec<f64>, replace: impl Fn(usize) -> Option<f64>) -> f64 {
        let row = data.row(i);
        buf.clear();
        buf.extend(self.cols.iter().map(|&c| replace(c).unwrap_or(row[c])));
        self.model.predict(buf)
    }

    pub fn predict_row(&self, data: &Dataset, i: usize, buf: &mut Vec<f64>) -> f64 {
        self.predict_row_with(data, i, buf, |_| None)
    }

    pub fn predict_all(&self, data: &Dataset) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.cols.len());
        (0..data.n()).map(|i| self.predict_row(data, i, &mut buf)).collect()
    }

    /// Predictions with column `col` replaced row-wise by `values`.
    pub fn predict_replaced(&self, data: &Dataset, col: usize, values: &[f64]) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.cols.len());
        (0..data.n())
            .map(|i| self.predict_row_with(data, i, &mut buf, |c| (c == col).then(|| values[i])))
            .collect()
    }
}

/// Predictions for every row of `data`, with a check for non-finite output.
pub fn predict_dataset(model: &dyn Predictor, data: &Dataset) -> Result<Vec<f64>> {
    let preds = BoundModel::new(model, data)?.predict_all(data);
    check_finite(&preds)?;
    Ok(preds)
}

pub(crate) fn check_finite(preds: &[f64]) -> Result<()> {
    match preds.iter().position(|v| !v.is_finite()) {
        Some(row) => Err(FiError::NonFinitePrediction { row }),
        None => Ok(()),
    }
}

/// Convenience constructor for column-name lists.
pub fn names<S: AsRef<str>>(v: &[S]) -> Vec<String> {
    v.iter().map(|s| s.as_ref().to_string()).collect()
}
