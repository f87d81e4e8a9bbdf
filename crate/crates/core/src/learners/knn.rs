use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::model::{Model, Predictor};

/// k-nearest-neighbour regressor on z-standardized features (Euclidean).
/// For classification targets the prediction is the neighbour share of ones.
#[derive(Debug, Clone)]
pub struct KnnModel {
    inputs: Vec<String>,
    k: usize,
    mean: Vec<f64>,
    sd: Vec<f64>,
    /// standardized training rows, row-major
    points: Vec<f64>,
    targets: Vec<f64>,
}

impl Predictor for KnnModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let p = self.inputs.len();
        let n = self.targets.len();
        if self.k >= n || p == 0 {
            return self.targets.iter().sum::<f64>() / n as f64;
        }
        let z: Vec<f64> = (0..p).map(|j| (x[j] - self.mean[j]) / self.sd[j]).collect();
        let mut dist: Vec<(f64, usize)> = self
            .points
            .chunks_exact(p)
            .enumerate()
            .map(|(i, row)| (row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.select_nth_unstable_by(self.k - 1, |a, b| a.partial_cmp(b).expect("finite distances"));
        dist[..self.k].iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / self.k as f64
    }
}

impl From<KnnModel> for Model {
    fn from(m: KnnModel) -> Model {
        Arc::new(m)
    }
}

pub fn fit_knn(data: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 || k > data.n() {
        return Err(invalid(format!("knn needs 1 <= k <= n ({}), got {k}", data.n())));
    }
    let (mean, sd) = super::standardization(data);
    let p = data.p();
    let mut points = Vec::with_capacity(data.n() * p);
    for i in 0..data.n() {
        points.extend(data.row(i).iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]));
    }
    Ok(KnnModel { inputs: data.names().to_vec(), k, mean, sd, points, targets: data.target().to_vec() })
}
