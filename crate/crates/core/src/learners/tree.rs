use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::exec;
use crate::model::{Model, Predictor};
use crate::seed::{tag, SeedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 30, min_leaf: 5 }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

/// CART regression tree (variance reduction, axis-aligned splits).
#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.feature == LEAF {
                return node.value;
            }
            k = if x[node.feature as usize] <= node.threshold { node.left } else { node.right } as usize;
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Grow a tree on the rows in `rows` (duplicates allowed).
    pub fn fit(data: &Dataset, rows: &mut [usize], params: &TreeParams) -> Self {
        let mut nodes = Vec::new();
        let mut scratch = Vec::with_capacity(rows.len());
        grow(data, rows, 0, params, &mut nodes, &mut scratch);
        RegressionTree { nodes }
    }
}

fn leaf_value(data: &Dataset, rows: &[usize]) -> f64 {
    let y = data.target();
    rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
}

fn grow(
    data: &Dataset,
    rows: &mut [usize],
    depth: usize,
    params: &TreeParams,
    nodes: &mut Vec<Node>,
    scratch: &mut Vec<(f64, f64)>,
) -> u32 {
    let id = nodes.len() as u32;
    let value = leaf_value(data, rows);
    nodes.push(Node { feature: LEAF, threshold: 0.0, left: LEAF, right: LEAF, value });

    let m = rows.len();
    let min_leaf = params.min_leaf.max(1);
    if depth >= params.max_depth || m < 2 * min_leaf {
        return id;
    }
    let y = data.target();
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let base = total * total / m as f64;
    let parent_sse = rows.iter().map(|&i| y[i] * y[i]).sum::<f64>() - base;
    if parent_sse <= 0.0 {
        return id;
    }

    // best (gain, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..data.p() {
        scratch.clear();
        scratch.extend(rows.iter().map(|&i| (data.value(i, f), y[i])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = 0.0;
        for s in 1..m {
            left += scratch[s - 1].1;
            if s < min_leaf || m - s < min_leaf || scratch[s - 1].0 == scratch[s].0 {
                continue;
            }
            let right = total - left;
            let score = left * left / s as f64 + right * right / (m - s) as f64 - base;
            if score > 1e-12 * parent_sse && best.is_none_or(|b| score > b.0) {
                best = Some((score, f, 0.5 * (scratch[s - 1].0 + scratch[s].0)));
            }
        }
    }
    let Some((_, f, threshold)) = best else {
        return id;
    };

    // partition rows in place: left block first
    let mut lo = 0;
    for k in 0..m {
        if data.value(rows[k], f) <= threshold {
            rows.swap(lo, k);
            lo += 1;
        }
    }
    let (l_rows, r_rows) = rows.split_at_mut(lo);
    let left = grow(data, l_rows, depth + 1, params, nodes, scratch);
    let right = grow(data, r_rows, depth + 1, params, nodes, scratch);
    let node = &mut nodes[id as usize];
    node.feature = f as u32;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    id
}

/// Bootstrap-aggregated CART trees without feature subsampling. The
/// prediction is the mean of the per-tree predictions.
#[derive(Debug, Clone)]
pub struct BaggedTrees {
    inputs: Vec<String>,
    trees: Vec<RegressionTree>,
}

impl BaggedTrees {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}

impl Predictor for BaggedTrees {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

impl From<BaggedTrees> for Model {
    fn from(m: BaggedTrees) -> Model {
        Arc::new(m)
    }
}

pub fn fit_bagged_trees(data: &Dataset, params: &TreeParams, seed: u64) -> Result<BaggedTrees> {
    if params.n_trees == 0 {
        return Err(invalid("bagged trees need at least one tree"));
    }
    let n = data.n();
    let seeds = SeedPolicy::new(seed);
    let trees = exec::map_indexed(params.n_trees, |t| {
        let mut rng = seeds.rng(&[tag::LEARNER, t as u64]);
        let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        RegressionTree::fit(data, &mut rows, params)
    });
    Ok(BaggedTrees { inputs: data.names().to_vec(), trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::model::names;

    fn step_data() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, ((i * 7) % 13) as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 } else { 5.0 }).collect();
        Dataset::from_rows(rows, names(&["a", "b"]), y, Task::Regression).unwrap()
    }

    #[test]
    fn single_tree_finds_step() {
        let d = step_data();
        let mut rows: Vec<usize> = (0..100).collect();
        let t = RegressionTree::fit(&d, &mut rows, &TreeParams { n_trees: 1, max_depth: 30, min_leaf: 5 });
        assert_eq!(t.predict(&[10.0, 0.0]), 1.0);
        assert_eq!(t.predict(&[80.0, 0.0]), 5.0);
        assert_eq!(t.n_nodes(), 3);
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let d = step_data();
        let f = fit_bagged_trees(&d, &TreeParams { n_trees: 7, ..Default::default() }, 3).unwrap();
        for x in [[3.0, 1.0], [49.5, 12.0], [77.0, 4.0]] {
            let mean = f.trees().iter().map(|t| t.predict(&x)).sum::<f64>() / 7.0;
            assert_eq!(f.predict(&x), mean);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = step_data();
        let p = TreeParams { n_trees: 5, ..Default::default() };
        let a = fit_bagged_trees(&d, &p, 11).unwrap();
        let b = fit_bagged_trees(&d, &p, 11).unwrap();
        for i in 0..100 {
            assert_eq!(a.predict(d.row(i)), b.predict(d.row(i)));
        }
    }

    #[test]
    fn min_leaf_respected() {
        let d = step_data();
        let mut rows: Vec<usize> = (0..8).collect();
        let t = RegressionTree::fit(&d, &mut rows, &TreeParams { n_trees: 1, max_depth: 30, min_leaf: 5 });
        assert_eq!(t.n_nodes(), 1);
    }
}
