use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};
use crate::model::{Model, Predictor};

/// Ridge penalty used when the design matrix is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-6;

/// Relative size of a diagonal entry of R below which the design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares linear model with intercept and optional pairwise
/// interaction terms `x_a * x_b` for all `a < b`.
#[derive(Debug, Clone)]
pub struct OlsModel {
    inputs: Vec<String>,
    interactions: bool,
    /// intercept, main effects, then interactions in `(a, b)` lexicographic order
    pub coefficients: Vec<f64>,
    pub ridge_fallback: bool,
}

impl OlsModel {
    fn design_width(p: usize, interactions: bool) -> usize {
        1 + p + if interactions { p * (p.saturating_sub(1)) / 2 } else { 0 }
    }

    fn fill_design(x: &[f64], interactions: bool, out: &mut [f64]) {
        let p = x.len();
        out[0] = 1.0;
        out[1..=p].copy_from_slice(x);
        if interactions {
            let mut k = p + 1;
            for a in 0..p {
                for b in a + 1..p {
                    out[k] = x[a] * x[b];
                    k += 1;
                }
            }
        }
    }

    /// Coefficient of the named main effect.
    pub fn main_effect(&self, name: &str) -> Option<f64> {
        self.inputs.iter().position(|n| n == name).map(|j| self.coefficients[j + 1])
    }
}

impl Predictor for OlsModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let c = &self.coefficients;
        let p = x.len();
        let mut s = c[0];
        for j in 0..p {
            s += c[j + 1] * x[j];
        }
        if self.interactions {
            let mut k = p + 1;
            for a in 0..p {
                for b in a + 1..p {
                    s += c[k] * x[a] * x[b];
                    k += 1;
                }
            }
        }
        s
    }

    fn warnings(&self) -> Vec<String> {
        if self.ridge_fallback {
            vec![format!("rank-deficient design; ridge fallback with lambda {RIDGE_LAMBDA}")]
        } else {
            Vec::new()
        }
    }
}

impl From<OlsModel> for Model {
    fn from(m: OlsModel) -> Model {
        Arc::new(m)
    }
}

pub fn fit_ols(data: &Dataset, include_pairwise_interactions: bool) -> Result<OlsModel> {
    let (n, p) = (data.n(), data.p());
    let q = OlsModel::design_width(p, include_pairwise_interactions);
    if n == 0 {
        return Err(invalid("cannot fit on an empty dataset"));
    }
    let mut x = DMatrix::<f64>::zeros(n, q);
    let mut buf = vec![0.0; q];
    for i in 0..n {
        OlsModel::fill_design(data.row(i), include_pairwise_interactions, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            x[(i, k)] = *v;
        }
    }
    let y = DVector::from_column_slice(data.target());

    let mut ridge_fallback = n < q;
    let mut beta = None;
    if !ridge_fallback {
        let qr = x.clone().qr();
        let r = qr.r();
        let max_diag = (0..q).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
        if (0..q).any(|k| r[(k, k)].abs() <= RANK_TOL * max_diag) {
            ridge_fallback = true;
        } else {
            let mut qty = y.clone();
            qr.q_tr_mul(&mut qty);
            let rhs = qty.rows(0, q).into_owned();
            beta = r.solve_upper_triangular(&rhs);
            ridge_fallback = beta.is_none();
        }
    }
    let beta = match beta {
        Some(b) => b,
        None => {
            let nf = n as f64;
            let mut gram = x.tr_mul(&x) / nf;
            for k in 0..q {
                gram[(k, k)] += RIDGE_LAMBDA;
            }
            let rhs = x.tr_mul(&y) / nf;
            gram.cholesky().map(|c| c.solve(&rhs)).ok_or_else(|| FiError::Learner {
                subset: data.names().to_vec(),
                message: "ridge system not positive definite".into(),
            })?
        }
    };
    Ok(OlsModel {
        inputs: data.names().to_vec(),
        interactions: include_pairwise_interactions,
        coefficients: beta.iter().copied().collect(),
        ridge_fallback,
    })
}
