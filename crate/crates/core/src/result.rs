//! Result containers shared by all importance methods.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided standard-normal quantile `z_{1 - alpha/2}` for `level`.
pub fn z_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Importance of one feature (or feature group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub name: String,
    pub estimate: f64,
    /// Monte Carlo standard error over repetitions (or iterations)
    pub std_error: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub n_repetitions: usize,
    /// Standard error of the mean per-instance loss difference, which also
    /// reflects sampling variability of the evaluation rows.
    pub instance_std_error: Option<f64>,
    /// Per-instance loss differences (averaged over repetitions).
    #[serde(skip)]
    pub per_instance: Vec<f64>,
}

impl FeatureRecord {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: f64, n_repetitions: usize) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error,
            ci_low: None,
            ci_high: None,
            p_value: None,
            n_repetitions,
            instance_std_error: None,
            per_instance: Vec::new(),
        }
    }

    pub fn with_per_instance(mut self, diffs: Vec<f64>) -> Self {
        self.instance_std_error = Some(crate::loss::std_error(&diffs));
        self.per_instance = diffs;
        self
    }

    /// Wald interval `estimate ± z * se` using [`FeatureRecord::decision_std_error`].
    pub fn with_wald_ci(mut self, level: f64) -> Self {
        let half = z_quantile(level) * self.decision_std_error();
        self.ci_low = Some(self.estimate - half);
        self.ci_high = Some(self.estimate + half);
        self
    }

    /// Standard error combining Monte Carlo and instance-sampling noise.
    pub fn decision_std_error(&self) -> f64 {
        let inst = self.instance_std_error.unwrap_or(0.0);
        (self.std_error * self.std_error + inst * inst).sqrt()
    }

    pub fn z_score(&self) -> f64 {
        let se = self.decision_std_error();
        if se > 0.0 {
            self.estimate / se
        } else if self.estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(self.estimate)
        }
    }
}

/// Per-feature importances from one method run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FIResult {
    pub method: String,
    pub loss: String,
    pub seed: u64,
    pub features: Vec<FeatureRecord>,
    pub warnings: Vec<String>,
}

impl FIResult {
    pub fn new(method: impl Into<String>, loss: &crate::loss::Loss, seed: u64) -> Self {
        Self { method: method.into(), loss: loss.id().to_string(), seed, features: Vec::new(), warnings: Vec::new() }
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureRecord> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.estimate).collect()
    }

    /// `estimate / max positive estimate`; signed, so negative importances
    /// stay negative. All zero when no estimate is positive.
    pub fn relative_importance(&self) -> Vec<f64> {
        relative(&self.estimates())
    }
}

pub fn relative(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// A scalar estimate such as `v(S)` or a surplus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub std_error: f64,
    #[serde(skip)]
    pub per_instance: Vec<f64>,
}

impl ValueEstimate {
    pub fn from_per_instance(per_instance: Vec<f64>) -> Self {
        Self { value: crate::loss::mean(&per_instance), std_error: crate::loss::std_error(&per_instance), per_instance }
    }

    pub fn into_record(self, name: impl Into<String>) -> FeatureRecord {
        let mut r = FeatureRecord::new(name, self.value, 0.0, 1);
        r.instance_std_error = Some(self.std_error);
        r.per_instance = self.per_instance;
        r
    }
}
