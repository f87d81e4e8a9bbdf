//! One entry point for all importance methods: fit a learner on a training
//! part and estimate importance on the held-out part.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, FiError, Result};
use crate::learners::Learner;
use crate::loss::Loss;
use crate::marginal::{self, ReduceOptions, ValueFunction, Variant, DEFAULT_CONVERGENCE_RATIO, DEFAULT_MC_DRAWS};
use crate::perturb;
use crate::refit::{Protocol, RefitPlan, Refitter};
use crate::result::{FIResult, DEFAULT_LEVEL};
use crate::samplers::SamplerKind;
use crate::seed::{tag, SeedPolicy};
use crate::split::split_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pfi,
    Cfi,
    Rfi,
    Msagevf,
    Csagevf,
    Scsagevf,
    MsageValues,
    CsageValues,
    Loco,
    Wvim,
    Swvim,
    Loci,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Pfi,
        Method::Cfi,
        Method::Rfi,
        Method::Msagevf,
        Method::Csagevf,
        Method::Scsagevf,
        Method::MsageValues,
        Method::CsageValues,
        Method::Loco,
        Method::Wvim,
        Method::Swvim,
        Method::Loci,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Method::Pfi => "pfi",
            Method::Cfi => "cfi",
            Method::Rfi => "rfi",
            Method::Msagevf => "msagevf",
            Method::Csagevf => "csagevf",
            Method::Scsagevf => "scsagevf",
            Method::MsageValues => "msage",
            Method::CsageValues => "csage",
            Method::Loco => "loco",
            Method::Wvim => "wvim",
            Method::Swvim => "swvim",
            Method::Loci => "loci",
        }
    }

    /// Whether the method refits the learner on feature subsets.
    pub fn is_refit(&self) -> bool {
        matches!(self, Method::Loco | Method::Wvim | Method::Swvim | Method::Loci)
    }

    /// Methods that need an explicit feature set (conditioning set or group).
    pub fn needs_set(&self) -> bool {
        matches!(self, Method::Rfi | Method::Wvim)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = FiError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.id() == s).ok_or_else(|| {
            let ids: Vec<_> = Method::ALL.iter().map(|m| m.id()).collect();
            invalid(format!("unknown method '{s}' (available: {})", ids.join(", ")))
        })
    }
}

/// Method together with its tuning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Conditioning set for rfi/scsagevf/swvim, dropped group for wvim.
    pub set: Option<Vec<usize>>,
    pub sampler: SamplerKind,
    pub reps: usize,
    pub mc_draws: usize,
    pub sage_max_iters: usize,
    pub sage_ratio: f64,
    pub protocol: Protocol,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            set: None,
            sampler: SamplerKind::Gaussian,
            reps: 10,
            mc_draws: DEFAULT_MC_DRAWS,
            sage_max_iters: 200,
            sage_ratio: DEFAULT_CONVERGENCE_RATIO,
            protocol: Protocol::default(),
        }
    }

    pub fn with_set(mut self, set: Vec<usize>) -> Self {
        self.set = Some(set);
        self
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.method.needs_set() && self.set.is_none() {
            return Err(invalid(format!("method {} needs a feature set", self.method)));
        }
        if let Some(&j) = self.set.iter().flatten().find(|&&j| j >= p) {
            return Err(invalid(format!("feature index {j} out of range (p = {p})")));
        }
        if self.reps == 0 || self.mc_draws == 0 {
            return Err(invalid("reps and mc_draws must be at least 1"));
        }
        Ok(())
    }

    fn reduce_options(&self, variant: Variant, seed: u64) -> ReduceOptions {
        ReduceOptions::new(variant, seed).with_sampler(self.sampler).with_mc_draws(self.mc_draws)
    }

    /// Fit `learner` on `train` and estimate importance on `test`.
    ///
    /// Refit methods use exactly this one split regardless of `protocol`.
    pub fn evaluate(
        &self,
        learner: &Arc<dyn Learner>,
        train: &Dataset,
        test: &Dataset,
        loss: Loss,
        seed: u64,
    ) -> Result<FIResult> {
        self.validate(test.p())?;
        if self.method.is_refit() {
            let plan = RefitPlan::new(learner.clone(), self.protocol, seed);
            let refitter = Refitter::from_units(plan, vec![(train.clone(), test.clone())], loss)?;
            return self.run_refit(&refitter);
        }
        let model = learner
            .fit(train, SeedPolicy::new(seed).derive(&[tag::LEARNER]))
            .map_err(|e| FiError::Learner { subset: train.names().to_vec(), message: e.to_string() })?;
        let mut out = self.run_model(model.clone(), test, loss, seed)?;
        for w in model.warnings() {
            if !out.warnings.contains(&w) {
                out.warnings.push(w);
            }
        }
        Ok(out)
    }

    /// Evaluate on a whole dataset: refit methods follow `protocol`, the
    /// others fit on a holdout training part of the same fraction (0.7 for
    /// k-fold protocols).
    pub fn analyze(&self, learner: &Arc<dyn Learner>, data: &Dataset, loss: Loss, seed: u64) -> Result<FIResult> {
        self.validate(data.p())?;
        if self.method.is_refit() {
            let plan = RefitPlan::new(learner.clone(), self.protocol, seed);
            return self.run_refit(&Refitter::new(plan, data, loss)?);
        }
        let frac = match self.protocol {
            Protocol::Holdout { train_fraction } => train_fraction,
            Protocol::KFold { .. } => crate::refit::DEFAULT_TRAIN_FRACTION,
        };
        let (train, test) = split_indices(data.n(), frac, SeedPolicy::new(seed))?.apply(data);
        self.evaluate(learner, &train, &test, loss, seed)
    }

    /// Estimate importance for an already fitted model on `data`.
    pub fn run_model(&self, model: crate::model::Model, data: &Dataset, loss: Loss, seed: u64) -> Result<FIResult> {
        self.validate(data.p())?;
        let set = self.set.clone().unwrap_or_default();
        match self.method {
            Method::Pfi => perturb::pfi(model.as_ref(), data, loss, self.reps, seed),
            Method::Cfi => perturb::cfi(model.as_ref(), data, loss, self.sampler, self.reps, seed),
            Method::Rfi => perturb::rfi_all(model.as_ref(), data, loss, &set, self.sampler, self.reps, seed),
            Method::Msagevf | Method::MsageValues => {
                let vf = ValueFunction::new(model, data, loss, self.reduce_options(Variant::Marginal, seed))?;
                self.run_value_function(&vf)
            }
            Method::Csagevf | Method::CsageValues | Method::Scsagevf => {
                let vf = ValueFunction::new(model, data, loss, self.reduce_options(Variant::Conditional, seed))?;
                self.run_value_function(&vf)
            }
            m => Err(invalid(format!("method {m} refits the learner and needs training data"))),
        }
    }

    fn run_value_function(&self, vf: &ValueFunction) -> Result<FIResult> {
        match self.method {
            Method::Msagevf | Method::Csagevf => marginal::sage_value_functions(vf),
            Method::Scsagevf => marginal::surplus_all(vf, self.set.as_deref()),
            _ => {
                let est = if vf.p() <= 8 {
                    marginal::sage_exact(vf)?
                } else {
                    marginal::sage_sampled(vf, self.sage_max_iters, self.sage_ratio)?
                };
                let mut r = est.result;
                r.method = self.method.id().to_string();
                Ok(r)
            }
        }
    }

    fn run_refit(&self, r: &Refitter) -> Result<FIResult> {
        match self.method {
            Method::Loco => r.loco_all(),
            Method::Loci => r.loci_all(),
            Method::Swvim => match &self.set {
                Some(g) => r.swvim_all(g),
                None => r.loco_all().map(|mut res| {
                    res.method = "swvim".into();
                    res
                }),
            },
            Method::Wvim => {
                let group = self.set.clone().unwrap_or_default();
                let name = group.iter().map(|&j| r.names()[j].as_str()).collect::<Vec<_>>().join("+");
                let mut out = FIResult::new("wvim", &r.loss(), r.seed());
                out.features.push(r.wvim(&group)?.into_record(name).with_wald_ci(DEFAULT_LEVEL));
                Ok(out)
            }
            m => Err(invalid(format!("method {m} is not a refit method"))),
        }
    }
}
