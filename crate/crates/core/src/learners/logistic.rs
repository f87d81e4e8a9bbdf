use std::sync::Arc;

use crate::data::{Dataset, Task};
use crate::error::{invalid, Result};
use crate::model::{Model, Predictor};

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression fitted by full-batch gradient ascent on the mean
/// log-likelihood over standardized features.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    inputs: Vec<String>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    /// intercept then one weight per standardized feature
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    fn linear(&self, x: &[f64]) -> f64 {
        self.weights[0]
            + x.iter().enumerate().map(|(j, v)| self.weights[j + 1] * (v - self.mean[j]) / self.sd[j]).sum::<f64>()
    }
}

impl Predictor for LogisticModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear(x))
    }

    fn warnings(&self) -> Vec<String> {
        if self.converged {
            Vec::new()
        } else {
            vec![format!("logistic regression did not converge in {} iterations", self.iterations)]
        }
    }
}

impl From<LogisticModel> for Model {
    fn from(m: LogisticModel) -> Model {
        Arc::new(m)
    }
}

pub fn fit_logistic(data: &Dataset, max_iter: usize, tol: f64) -> Result<LogisticModel> {
    if data.task() != Task::BinaryClassification {
        return Err(invalid("logistic regression needs a binary classification target"));
    }
    let (mean, sd) = super::standardization(data);
    let (n, p) = (data.n(), data.p());
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| data.row(i).iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect())
        .collect();
    let y = data.target();
    // the Hessian of the mean log-likelihood is bounded by (1 + p) / 4 on
    // standardized inputs
    let step = 4.0 / (1.0 + p as f64);
    let mut w = vec![0.0; p + 1];
    let mut grad = vec![0.0; p + 1];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (zi, &yi) in z.iter().zip(y) {
            let eta = w[0] + zi.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
            let r = yi - sigmoid(eta);
            grad[0] += r;
            for j in 0..p {
                grad[j + 1] += r * zi[j];
            }
        }
        let mut max_g: f64 = 0.0;
        for (wk, gk) in w.iter_mut().zip(&grad) {
            let g = gk / n as f64;
            max_g = max_g.max(g.abs());
            *wk += step * g;
        }
        if max_g < tol {
            converged = true;
            break;
        }
    }
    Ok(LogisticModel { inputs: data.names().to_vec(), mean, sd, weights: w, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::names;

    #[test]
    fn separable_data_is_classified_perfectly() {
        // X1 < 0 => 0, X1 > 0 => 1, margin 1 on each side
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let t = (i % 50) as f64 / 10.0;
                vec![if i < 50 { -1.0 - t } else { 1.0 + t }]
            })
            .collect();
        let y: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 1.0 }).collect();
        let d = Dataset::from_rows(rows, names(&["x1"]), y, Task::BinaryClassification).unwrap();
        let m = fit_logistic(&d, 500, 1e-8).unwrap();
        let correct = (0..100).filter(|&i| (m.predict(d.row(i)) > 0.5) == (d.target()[i] == 1.0)).count();
        assert_eq!(correct, 100);
        // separable data drives the weights to infinity
        assert!(!m.converged);
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn rejects_regression_target() {
        let d = Dataset::from_rows(vec![vec![0.0]; 2], names(&["x"]), vec![0.5, 2.0], Task::Regression).unwrap();
        assert!(fit_logistic(&d, 10, 1e-6).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
