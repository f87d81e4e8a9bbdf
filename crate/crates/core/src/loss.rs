//! Loss functions and empirical risk.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{invalid, Result};
use crate::model::{predict_dataset, Predictor};

pub const DEFAULT_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loss {
    L2,
    /// Binary cross-entropy on the predicted probability of class 1, with
    /// the probability clamped to `[clip, 1 - clip]`.
    CrossEntropy { clip: f64 },
}

impl Loss {
    pub fn cross_entropy() -> Self {
        Loss::CrossEntropy { clip: DEFAULT_CLIP }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Loss::L2 => "l2",
            Loss::CrossEntropy { .. } => "cross-entropy",
        }
    }

    pub fn parse(s: &str) -> Option<Loss> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "mse" => Some(Loss::L2),
            "ce" | "cross-entropy" | "logloss" => Some(Loss::cross_entropy()),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, y: f64, pred: f64) -> f64 {
        match *self {
            Loss::L2 => {
                let r = y - pred;
                r * r
            }
            Loss::CrossEntropy { clip } => {
                let p = pred.clamp(clip, 1.0 - clip);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
        }
    }

    /// Second derivative of the loss in the prediction.
    pub fn curvature(&self, y: f64, pred: f64) -> f64 {
        match *self {
            Loss::L2 => 2.0,
            Loss::CrossEntropy { clip } => {
                let p = pred.clamp(clip, 1.0 - clip);
                y / (p * p) + (1.0 - y) / ((1.0 - p) * (1.0 - p))
            }
        }
    }

    pub fn check_task(&self, task: Task) -> Result<()> {
        match (self, task) {
            (Loss::CrossEntropy { .. }, Task::Regression) => {
                Err(invalid("cross-entropy loss needs a binary classification target"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-instance losses and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean_loss: f64,
    pub per_instance_losses: Vec<f64>,
    pub n: usize,
}

impl RiskEstimate {
    pub fn from_losses(per_instance_losses: Vec<f64>) -> Self {
        let n = per_instance_losses.len();
        Self { mean_loss: mean(&per_instance_losses), per_instance_losses, n }
    }

    pub fn from_predictions(loss: Loss, y: &[f64], preds: &[f64]) -> Self {
        Self::from_losses(y.iter().zip(preds).map(|(&y, &p)| loss.eval(y, p)).collect())
    }
}

/// Empirical risk of `model` on `data`.
pub fn estimate_risk(model: &dyn Predictor, data: &Dataset, loss: Loss) -> Result<RiskEstimate> {
    let preds = predict_dataset(model, data)?;
    Ok(RiskEstimate::from_predictions(loss, data.target(), &preds))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with `n - 1` denominator; 0 for fewer than two values.
pub(crate) fn sample_var(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean.
pub(crate) fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (sample_var(v) / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{names, FnModel};
    use proptest::prelude::*;

    #[test]
    fn cross_entropy_is_clamped() {
        let ce = Loss::cross_entropy();
        let worst = ce.eval(1.0, 0.0);
        assert!(worst.is_finite());
        assert!((worst - 27.631_021_115_928_547).abs() < 1e-9);
        assert!(ce.eval(1.0, 1.0) <= -(1.0 - DEFAULT_CLIP).ln() + 1e-15);
    }

    #[test]
    fn risk_reports_non_finite_row() {
        let d = Dataset::from_rows(vec![vec![1.0], vec![0.0]], names(&["x"]), vec![0.0, 0.0], Task::Regression).unwrap();
        let m = FnModel::new("inv", names(&["x"]), |x| 1.0 / x[0]);
        match estimate_risk(&m, &d, Loss::L2) {
            Err(crate::FiError::NonFinitePrediction { row }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perfect_model_zero_risk() {
        let d = Dataset::from_rows(vec![vec![1.0], vec![2.0]], names(&["x"]), vec![1.0, 2.0], Task::Regression).unwrap();
        let m = FnModel::new("id", names(&["x"]), |x| x[0]);
        assert_eq!(estimate_risk(&m, &d, Loss::L2).unwrap().mean_loss, 0.0);
    }

    proptest! {
        #[test]
        fn losses_nonnegative(y in -10.0f64..10.0, p in -10.0f64..10.0, b in 0u8..2, q in 0.0f64..=1.0) {
            prop_assert!(Loss::L2.eval(y, p) >= 0.0);
            prop_assert_eq!(Loss::L2.eval(y, y), 0.0);
            let ce = Loss::cross_entropy();
            let l = ce.eval(b as f64, q);
            prop_assert!(l.is_finite() && l >= 0.0);
        }

        #[test]
        fn risk_mean_matches(v in proptest::collection::vec(0.0f64..100.0, 1..50)) {
            let r = RiskEstimate::from_losses(v.clone());
            let m = v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!((r.mean_loss - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
    }
}
