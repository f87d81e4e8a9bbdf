//! Perturbation-based importance: PFI, CFI and RFI.
//!
//! All three replace the feature of interest by draws from a sampler and
//! report the mean increase in loss. They share one routine, and the random
//! stream of repetition `r` for feature `j` depends only on
//! `(seed, j, r)`, so `rfi` with `G = ∅` and the permutation sampler equals
//! `pfi`, and `rfi` with `G = -j` equals `cfi`, bit for bit.

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::exec;
use crate::loss::{mean, sample_var, Loss};
use crate::model::{check_finite, BoundModel, Predictor};
use crate::result::{FIResult, FeatureRecord, DEFAULT_LEVEL};
use crate::samplers::{ConditionalSampler, SamplerKind};
use crate::seed::{tag, SeedPolicy};

/// Permutation feature importance for every column of `data`.
pub fn pfi(model: &dyn Predictor, data: &Dataset, loss: Loss, reps: usize, seed: u64) -> Result<FIResult> {
    let plan: Vec<(usize, Vec<usize>)> = (0..data.p()).map(|j| (j, Vec::new())).collect();
    run("pfi", model, data, loss, &plan, SamplerKind::Permutation, reps, seed)
}

/// Conditional feature importance: replacement drawn given all other features.
pub fn cfi(
    model: &dyn Predictor,
    data: &Dataset,
    loss: Loss,
    sampler: SamplerKind,
    reps: usize,
    seed: u64,
) -> Result<FIResult> {
    let p = data.p();
    let plan: Vec<(usize, Vec<usize>)> = (0..p).map(|j| (j, (0..p).filter(|&k| k != j).collect())).collect();
    run("cfi", model, data, loss, &plan, sampler, reps, seed)
}

/// Relative feature importance of feature `j` given the set `given`.
#[allow(clippy::too_many_arguments)]
pub fn rfi(
    model: &dyn Predictor,
    data: &Dataset,
    loss: Loss,
    j: usize,
    given: &[usize],
    sampler: SamplerKind,
    reps: usize,
    seed: u64,
) -> Result<FIResult> {
    if j >= data.p() {
        return Err(invalid(format!("feature index {j} out of range (p = {})", data.p())));
    }
    if given.contains(&j) {
        return Err(invalid("the conditioning set must not contain the feature of interest"));
    }
    let mut g = given.to_vec();
    g.sort_unstable();
    g.dedup();
    run("rfi", model, data, loss, &[(j, g)], sampler, reps, seed)
}

/// RFI for every feature with the same conditioning set `given` (each
/// feature's own index is dropped from it).
pub fn rfi_all(
    model: &dyn Predictor,
    data: &Dataset,
    loss: Loss,
    given: &[usize],
    sampler: SamplerKind,
    reps: usize,
    seed: u64,
) -> Result<FIResult> {
    let plan: Vec<(usize, Vec<usize>)> =
        (0..data.p()).map(|j| (j, given.iter().copied().filter(|&k| k != j).collect())).collect();
    run("rfi", model, data, loss, &plan, sampler, reps, seed)
}

#[allow(clippy::too_many_arguments)]
fn run(
    method: &str,
    model: &dyn Predictor,
    data: &Dataset,
    loss: Loss,
    plan: &[(usize, Vec<usize>)],
    sampler: SamplerKind,
    reps: usize,
    seed: u64,
) -> Result<FIResult> {
    if reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    loss.check_task(data.task())?;
    let bound = BoundModel::new(model, data)?;
    let base_preds = bound.predict_all(data);
    check_finite(&base_preds)?;
    let y = data.target();
    let base: Vec<f64> = y.iter().zip(&base_preds).map(|(&yi, &f)| loss.eval(yi, f)).collect();
    let seeds = SeedPolicy::new(seed);

    let mut result = FIResult::new(method, &loss, seed);
    for (j, given) in plan {
        let record = perturb_one(&bound, data, loss, &base, *j, given, sampler, reps, seeds)?;
        result.features.push(record.with_wald_ci(DEFAULT_LEVEL));
    }
    result.warnings = model.warnings();
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn perturb_one(
    bound: &BoundModel<'_>,
    data: &Dataset,
    loss: Loss,
    base: &[f64],
    j: usize,
    given: &[usize],
    sampler: SamplerKind,
    reps: usize,
    seeds: SeedPolicy,
) -> Result<FeatureRecord> {
    let name = data.names()[j].clone();
    let n = data.n();
    if !bound.reads(j) {
        // replacing an unread column cannot change any prediction
        return Ok(FeatureRecord::new(name, 0.0, 0.0, reps).with_per_instance(vec![0.0; n]));
    }
    let fitted = ConditionalSampler::fit(sampler, data, &[j], given)?;
    let conditioned = fitted.condition(data)?;
    let y = data.target();
    let per_rep: Vec<Vec<f64>> = exec::try_map_indexed(reps, |r| -> Result<Vec<f64>> {
        let mut rng = seeds.rng(&[tag::PERTURB, j as u64, r as u64]);
        let values = conditioned.draw(&mut rng);
        let preds = bound.predict_replaced(data, j, &values);
        check_finite(&preds)?;
        Ok(preds.iter().zip(y).zip(base).map(|((&f, &yi), &b)| loss.eval(yi, f) - b).collect())
    })?;
    let rep_means: Vec<f64> = per_rep.iter().map(|d| mean(d)).collect();
    let estimate = mean(&rep_means);
    let std_error = if reps > 1 { (sample_var(&rep_means) / reps as f64).sqrt() } else { 0.0 };
    let mut avg = vec![0.0; n];
    for d in &per_rep {
        for (a, v) in avg.iter_mut().zip(d) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= reps as f64);
    Ok(FeatureRecord::new(name, estimate, std_error, reps).with_per_instance(avg))
}
