//! Marginalization-based importance: reduced models, SAGE value functions
//! and SAGE values.
//!
//! A reduced model `f_S` keeps the features in `S` and averages the model
//! over completions of the others, drawn from the background data
//! (marginal variant) or from a conditional sampler given `X_S`
//! (conditional variant). The value function is
//! `v(S) = R(f_∅) - R(f_S)` on the evaluation rows.
//!
//! Monte Carlo averaging inflates the loss of a reduced model by roughly
//! `L''(f) Var / (2K)` for `K` draws. Per-instance losses are corrected by
//! that second-order term (exact for L2), so value functions are not biased
//! downwards by the number of draws.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::exec;
use crate::loss::{mean, Loss};
use crate::model::{bind, check_finite, Model, Predictor};
use crate::result::{FIResult, FeatureRecord, ValueEstimate, DEFAULT_LEVEL};
use crate::samplers::{ConditionalSampler, SamplerKind};
use crate::seed::{tag, SeedPolicy};

pub const DEFAULT_MC_DRAWS: usize = 50;
pub const DEFAULT_CONVERGENCE_RATIO: f64 = 0.025;
/// Exact Shapley enumeration is refused above this many features.
pub const MAX_EXACT_FEATURES: usize = 12;
const SAGE_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Marginal,
    Conditional,
}

impl Variant {
    pub fn prefix(&self) -> &'static str {
        match self {
            Variant::Marginal => "m",
            Variant::Conditional => "c",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReduceOptions {
    pub variant: Variant,
    /// sampler for the conditional variant
    pub sampler: SamplerKind,
    pub mc_draws: usize,
    pub seed: u64,
}

impl ReduceOptions {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self { variant, sampler: SamplerKind::Gaussian, mc_draws: DEFAULT_MC_DRAWS, seed }
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_mc_draws(mut self, k: usize) -> Self {
        self.mc_draws = k;
        self
    }
}

pub(crate) fn mask_of(subset: &[usize]) -> u64 {
    subset.iter().fold(0, |m, &j| m | 1 << j)
}

fn members(mask: u64, p: usize) -> Vec<usize> {
    (0..p).filter(|&j| mask >> j & 1 == 1).collect()
}

/// How a reduced model fills the columns it does not keep.
#[derive(Debug)]
enum Completion {
    /// prediction does not depend on the row
    Constant(f64),
    /// nothing to marginalize
    Identity,
    /// draw whole background rows for the missing columns
    Background,
    Sampler(Box<ConditionalSampler>),
}

/// `f_S` for one subset, evaluated on full-width rows of the background data.
#[derive(Debug)]
struct Reducer {
    model: Model,
    /// dataset columns read by the model, in model-input order
    cols: Vec<usize>,
    /// positions in `cols` that are marginalized
    missing: Vec<usize>,
    /// kept dataset columns (the conditioning set for the sampler)
    kept: Vec<usize>,
    background: Arc<Dataset>,
    completion: Completion,
    draws: usize,
}

impl Reducer {
    /// Mean and sample variance of the model over `draws` completions.
    fn eval<R: Rng>(&self, row: &[f64], rng: &mut R) -> (f64, f64) {
        let mut x: Vec<f64> = self.cols.iter().map(|&c| row[c]).collect();
        match &self.completion {
            Completion::Constant(v) => (*v, 0.0),
            Completion::Identity => (self.model.predict(&x), 0.0),
            Completion::Background => {
                let n = self.background.n();
                let preds: Vec<f64> = (0..self.draws)
                    .map(|_| {
                        let b = self.background.row(rng.random_range(0..n));
                        for &m in &self.missing {
                            x[m] = b[self.cols[m]];
                        }
                        self.model.predict(&x)
                    })
                    .collect();
                mean_var(&preds)
            }
            Completion::Sampler(s) => {
                let given: Vec<f64> = self.kept.iter().map(|&c| row[c]).collect();
                let rs = s.row(&given);
                let mut out = vec![0.0; self.missing.len()];
                let preds: Vec<f64> = (0..self.draws)
                    .map(|_| {
                        rs.draw(rng, &mut out);
                        for (&m, v) in self.missing.iter().zip(&out) {
                            x[m] = *v;
                        }
                        self.model.predict(&x)
                    })
                    .collect();
                mean_var(&preds)
            }
        }
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    (m, var)
}

/// SAGE value function `v(S)` of one model on one evaluation dataset, with
/// per-subset caching.
#[derive(Debug)]
pub struct ValueFunction {
    model: Model,
    data: Arc<Dataset>,
    cols: Vec<usize>,
    loss: Loss,
    opts: ReduceOptions,
    seeds: SeedPolicy,
    mean_pred: f64,
    base_losses: Vec<f64>,
    reducers: Mutex<HashMap<u64, Arc<Reducer>>>,
    losses: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl ValueFunction {
    /// The evaluation rows double as background data and as the fitting
    /// data of the conditional sampler.
    pub fn new(model: Model, data: &Dataset, loss: Loss, opts: ReduceOptions) -> Result<Self> {
        if opts.mc_draws == 0 {
            return Err(invalid("mc_draws must be at least 1"));
        }
        if data.p() > 63 {
            return Err(invalid("value functions support at most 63 features"));
        }
        loss.check_task(data.task())?;
        let cols = bind(model.as_ref(), data)?;
        let preds = crate::model::predict_dataset(model.as_ref(), data)?;
        let mean_pred = mean(&preds);
        let base_losses = data.target().iter().map(|&y| loss.eval(y, mean_pred)).collect();
        Ok(Self {
            model,
            data: Arc::new(data.clone()),
            cols,
            loss,
            opts,
            seeds: SeedPolicy::new(opts.seed),
            mean_pred,
            base_losses,
            reducers: Mutex::new(HashMap::new()),
            losses: Mutex::new(HashMap::new()),
        })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    pub fn names(&self) -> &[String] {
        self.data.names()
    }

    pub fn options(&self) -> &ReduceOptions {
        &self.opts
    }

    /// Average prediction, the value of `f_∅`.
    pub fn mean_prediction(&self) -> f64 {
        self.mean_pred
    }

    fn reducer(&self, mask: u64) -> Result<Arc<Reducer>> {
        if let Some(r) = self.reducers.lock().expect("reducer cache").get(&mask) {
            return Ok(r.clone());
        }
        let kept = members(mask, self.p());
        let missing: Vec<usize> = (0..self.cols.len()).filter(|&m| mask >> self.cols[m] & 1 == 0).collect();
        let reads_kept = self.cols.iter().any(|&c| mask >> c & 1 == 1);
        let completion = if missing.is_empty() {
            Completion::Identity
        } else if mask == 0 || (self.opts.variant == Variant::Marginal && !reads_kept) {
            // every read column is drawn independently of the row
            Completion::Constant(self.mean_pred)
        } else {
            match self.opts.variant {
                Variant::Marginal => Completion::Background,
                Variant::Conditional => {
                    let targets: Vec<usize> = missing.iter().map(|&m| self.cols[m]).collect();
                    Completion::Sampler(Box::new(ConditionalSampler::fit(self.opts.sampler, &self.data, &targets, &kept)?))
                }
            }
        };
        let r = Arc::new(Reducer {
            model: self.model.clone(),
            cols: self.cols.clone(),
            missing,
            kept,
            background: self.data.clone(),
            completion,
            draws: self.opts.mc_draws,
        });
        self.reducers.lock().expect("reducer cache").insert(mask, r.clone());
        Ok(r)
    }

    /// The reduced model `f_S` as a standalone predictor over the features
    /// in `S`.
    pub fn reduced_model(&self, subset: &[usize]) -> Result<ReducedModel> {
        let mask = mask_of(subset);
        let kept = members(mask, self.p());
        Ok(ReducedModel {
            inputs: kept.iter().map(|&j| self.names()[j].clone()).collect(),
            kept,
            p: self.p(),
            reducer: self.reducer(mask)?,
            seeds: self.seeds,
        })
    }

    /// Loss of `f_S` on evaluation row `i`, bias-corrected for the Monte
    /// Carlo average. The random stream depends only on `i`, so subsets
    /// share their draws where they marginalize the same columns.
    pub fn instance_loss(&self, i: usize, mask: u64) -> Result<f64> {
        if mask == 0 {
            return Ok(self.base_losses[i]);
        }
        let r = self.reducer(mask)?;
        Ok(self.instance_loss_with(&r, i))
    }

    fn instance_loss_with(&self, r: &Reducer, i: usize) -> f64 {
        let mut rng = self.seeds.rng(&[tag::REDUCE, i as u64]);
        let (f, var) = r.eval(self.data.row(i), &mut rng);
        let y = self.data.target()[i];
        let mut l = self.loss.eval(y, f);
        if var > 0.0 {
            l -= 0.5 * self.loss.curvature(y, f) * var / r.draws as f64;
        }
        l
    }

    /// Per-instance losses of `f_S` on all evaluation rows (cached).
    pub fn losses(&self, subset: &[usize]) -> Result<Arc<Vec<f64>>> {
        self.losses_mask(mask_of(subset))
    }

    fn losses_mask(&self, mask: u64) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self.losses.lock().expect("loss cache").get(&mask) {
            return Ok(v.clone());
        }
        let v = if mask == 0 {
            self.base_losses.clone()
        } else {
            let r = self.reducer(mask)?;
            let v = exec::map_indexed(self.data.n(), |i| self.instance_loss_with(&r, i));
            check_finite(&v)?;
            v
        };
        let v = Arc::new(v);
        self.losses.lock().expect("loss cache").insert(mask, v.clone());
        Ok(v)
    }

    /// `v(S) = R(f_∅) - R(f_S)` with its standard error over rows.
    pub fn value(&self, subset: &[usize]) -> Result<ValueEstimate> {
        self.check_subset(subset)?;
        let l = self.losses(subset)?;
        Ok(ValueEstimate::from_per_instance(self.base_losses.iter().zip(l.iter()).map(|(b, s)| b - s).collect()))
    }

    /// Surplus `v(G ∪ {j}) - v(G)`.
    pub fn surplus(&self, j: usize, given: &[usize]) -> Result<ValueEstimate> {
        self.check_subset(given)?;
        if j >= self.p() || given.contains(&j) {
            return Err(invalid("surplus needs a feature index outside the conditioning set"));
        }
        let without = self.losses(given)?;
        let mut with: Vec<usize> = given.to_vec();
        with.push(j);
        let with = self.losses(&with)?;
        Ok(ValueEstimate::from_per_instance(without.iter().zip(with.iter()).map(|(a, b)| a - b).collect()))
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        match subset.iter().find(|&&j| j >= self.p()) {
            Some(j) => Err(invalid(format!("feature index {j} out of range (p = {})", self.p()))),
            None => Ok(()),
        }
    }
}

/// A reduced model `f_S` as a prediction function over `X_S`.
///
/// Draws for an input are seeded from the input's bit pattern, so the
/// model is a pure function.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    inputs: Vec<String>,
    kept: Vec<usize>,
    p: usize,
    reducer: Arc<Reducer>,
    seeds: SeedPolicy,
}

impl Predictor for ReducedModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut row = vec![0.0; self.p];
        for (&j, &v) in self.kept.iter().zip(x) {
            row[j] = v;
        }
        let key: Vec<u64> = std::iter::once(tag::REDUCE).chain(x.iter().map(|v| v.to_bits())).collect();
        let mut rng = self.seeds.rng(&key);
        self.reducer.eval(&row, &mut rng).0
    }
}

/// `v(S)` for every single feature: the mSAGEvf / cSAGEvf importances.
pub fn sage_value_functions(vf: &ValueFunction) -> Result<FIResult> {
    let mut out = FIResult::new(format!("{}sagevf", vf.opts.variant.prefix()), &vf.loss, vf.opts.seed);
    for j in 0..vf.p() {
        out.features.push(vf.value(&[j])?.into_record(&vf.names()[j]).with_wald_ci(DEFAULT_LEVEL));
    }
    Ok(out)
}

/// Surplus `v^c(G ∪ {j}) - v^c(G)` for every feature, with `G` the given
/// set minus `j`; `given = None` means `G = -j`.
pub fn surplus_all(vf: &ValueFunction, given: Option<&[usize]>) -> Result<FIResult> {
    let p = vf.p();
    let mut out = FIResult::new(format!("s{}sagevf", vf.opts.variant.prefix()), &vf.loss, vf.opts.seed);
    for j in 0..p {
        let g: Vec<usize> = match given {
            Some(g) => g.iter().copied().filter(|&k| k != j).collect(),
            None => (0..p).filter(|&k| k != j).collect(),
        };
        out.features.push(vf.surplus(j, &g)?.into_record(&vf.names()[j]).with_wald_ci(DEFAULT_LEVEL));
    }
    Ok(out)
}

/// SAGE values with provenance of how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageEstimate {
    pub result: FIResult,
    /// permutation-sampling iterations (0 for exact enumeration)
    pub iterations: usize,
    pub converged: bool,
}

impl SageEstimate {
    pub fn values(&self) -> Vec<f64> {
        self.result.estimates()
    }
}

fn shapley_weights(p: usize) -> Vec<f64> {
    // w(s) = s! (p - s - 1)! / p!
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    (0..p).map(|s| fact(s) * fact(p - s - 1) / fact(p)).collect()
}

/// Exact SAGE values from all `2^p` cached value-function evaluations.
pub fn sage_exact(vf: &ValueFunction) -> Result<SageEstimate> {
    let p = vf.p();
    if p > MAX_EXACT_FEATURES {
        return Err(invalid(format!(
            "exact SAGE enumerates 2^p coalitions and is limited to p <= {MAX_EXACT_FEATURES} (p = {p}); use sampled SAGE"
        )));
    }
    let full = 1u64 << p;
    let losses: Vec<Arc<Vec<f64>>> = (0..full).map(|m| vf.losses_mask(m)).collect::<Result<_>>()?;
    let w = shapley_weights(p);
    let n = vf.data.n();
    let mut result = FIResult::new(format!("{}sage", vf.opts.variant.prefix()), &vf.loss, vf.opts.seed);
    for j in 0..p {
        let bit = 1u64 << j;
        let mut phi = vec![0.0; n];
        for m in (0..full).filter(|m| m & bit == 0) {
            let wt = w[m.count_ones() as usize];
            let (a, b) = (&losses[m as usize], &losses[(m | bit) as usize]);
            for i in 0..n {
                phi[i] += wt * (a[i] - b[i]);
            }
        }
        let v = ValueEstimate::from_per_instance(phi);
        result.features.push(v.into_record(&vf.names()[j]).with_wald_ci(DEFAULT_LEVEL));
    }
    Ok(SageEstimate { result, iterations: 0, converged: true })
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// SAGE values by permutation sampling. Each iteration draws one
/// evaluation row and one feature ordering and records every feature's
/// marginal contribution. Iterations run in fixed-size batches; after each
/// batch sampling stops once `max_j se_j < convergence_ratio * max_k |phi_k|`.
pub fn sage_sampled(vf: &ValueFunction, max_iters: usize, convergence_ratio: f64) -> Result<SageEstimate> {
    use rand::seq::SliceRandom;
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    let p = vf.p();
    let n = vf.data.n();
    let mut stats = vec![Running::default(); p];
    let mut done = 0;
    let mut converged = false;
    while done < max_iters && !converged {
        let batch = SAGE_BATCH.min(max_iters - done);
        let contributions: Vec<Vec<f64>> = exec::try_map_indexed(batch, |b| -> Result<Vec<f64>> {
            let t = (done + b) as u64;
            let mut rng = vf.seeds.rng(&[tag::SAGE_PERM, t]);
            let i = rng.random_range(0..n);
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut rng);
            let mut delta = vec![0.0; p];
            let mut mask = 0u64;
            let mut prev = vf.instance_loss(i, 0)?;
            for &j in &order {
                mask |= 1 << j;
                let cur = vf.instance_loss(i, mask)?;
                delta[j] = prev - cur;
                prev = cur;
            }
            Ok(delta)
        })?;
        for delta in contributions {
            for (s, d) in stats.iter_mut().zip(delta) {
                s.push(d);
            }
        }
        done += batch;
        let max_se = stats.iter().map(Running::std_error).fold(0.0, f64::max);
        let max_phi = stats.iter().map(|s| s.mean.abs()).fold(0.0, f64::max);
        converged = max_se < convergence_ratio * max_phi;
    }
    let mut result = FIResult::new(format!("{}sage", vf.opts.variant.prefix()), &vf.loss, vf.opts.seed);
    for (j, s) in stats.iter().enumerate() {
        let se = if s.n < 2.0 { 0.0 } else { s.std_error() };
        result.features.push(FeatureRecord::new(&vf.names()[j], s.mean, se, done).with_wald_ci(DEFAULT_LEVEL));
    }
    if !converged {
        result.warnings.push(format!("sampled SAGE stopped at max_iters = {max_iters} before convergence"));
    }
    Ok(SageEstimate { result, iterations: done, converged })
}
