//! Run configuration for `analyze`: built from flags, optionally seeded
//! from a JSON file, validated before anything is computed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use featimp::inference::{Adjustment, MIN_NULLS};
use featimp::learners::LearnerKind;
use featimp::marginal::DEFAULT_MC_DRAWS;
use featimp::methods::{Method, MethodConfig};
use featimp::refit::{Protocol, DEFAULT_TRAIN_FRACTION};
use featimp::{Dataset, Loss, SamplerKind, Task};

use crate::{AnalyzeArgs, CliError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub tool_version: String,
    pub data: String,
    pub target: String,
    pub task: Task,
    pub method: String,
    pub loss: String,
    pub learner: String,
    pub sampler: String,
    pub reps: usize,
    pub mc_draws: usize,
    pub seed: u64,
    pub cond_set: Option<Vec<String>>,
    pub protocol: String,
    pub train_fraction: f64,
    pub folds: usize,
    pub ci_resamples: Option<usize>,
    pub level: f64,
    pub variance_correction: Option<String>,
    pub pimp: Option<usize>,
    pub adjust: Option<String>,
    pub out: Option<String>,
    pub csv: Option<String>,
}

impl RunConfig {
    fn defaults() -> Self {
        Self {
            command: "analyze".into(),
            tool_version: TOOL_VERSION.into(),
            data: String::new(),
            target: String::new(),
            task: Task::Regression,
            method: String::new(),
            loss: "l2".into(),
            learner: "ols".into(),
            sampler: "gaussian".into(),
            reps: 10,
            mc_draws: DEFAULT_MC_DRAWS,
            seed: 0,
            cond_set: None,
            protocol: "holdout".into(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            folds: 5,
            ci_resamples: None,
            level: 0.95,
            variance_correction: None,
            pimp: None,
            adjust: None,
            out: None,
            csv: None,
        }
    }

    /// Read a config file: either a bare config object or a result file whose
    /// `config` block is reused.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("--config: cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("--config: invalid JSON: {e}")))?;
        let block = match value.get("config") {
            Some(c) if value.get("schema_version").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(block).map_err(|e| CliError::config(format!("--config: {e}")))
    }

    /// Flags override the file; unset flags keep file values or defaults.
    pub fn resolve(args: &AnalyzeArgs) -> Result<Self, CliError> {
        let mut c = match &args.config {
            Some(p) => Self::from_file(p)?,
            None => Self::defaults(),
        };
        c.tool_version = TOOL_VERSION.into();
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &args.$field {
                    c.$field = v.clone();
                }
            };
            ($field:ident, some) => {
                if let Some(v) = &args.$field {
                    c.$field = Some(v.clone());
                }
            };
        }
        if let Some(d) = &args.data {
            c.data = d.display().to_string();
        }
        set!(target);
        set!(method);
        set!(loss);
        set!(learner);
        set!(sampler);
        set!(reps);
        set!(mc_draws);
        set!(seed);
        set!(protocol);
        set!(train_fraction);
        set!(folds);
        set!(level);
        set!(ci_resamples, some);
        set!(pimp, some);
        set!(adjust, some);
        if let Some(t) = &args.task {
            c.task = match t.as_str() {
                "regression" => Task::Regression,
                "classification" | "binary-classification" => Task::BinaryClassification,
                other => return Err(CliError::config(format!("--task: unknown task '{other}' (regression, classification)"))),
            };
        } else if args.config.is_none() {
            let ce = Loss::parse(&c.loss).is_some_and(|l| matches!(l, Loss::CrossEntropy { .. }));
            if ce || c.learner == "logistic" {
                c.task = Task::BinaryClassification;
            }
        }
        if let Some(s) = &args.cond_set {
            c.cond_set = Some(s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect());
        }
        if let Some(o) = &args.out {
            c.out = Some(o.display().to_string());
        }
        if let Some(o) = &args.csv {
            c.csv = Some(o.display().to_string());
        }
        c.variance_correction = c.ci_resamples.map(|_| featimp::inference::VARIANCE_CORRECTION.to_string());
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.data.is_empty() {
            return Err(CliError::config("--data is required"));
        }
        if self.target.is_empty() {
            return Err(CliError::config("--target is required"));
        }
        if self.method.is_empty() {
            return Err(CliError::config("--method is required"));
        }
        let method = self.method()?;
        self.loss()?;
        self.learner()?;
        self.sampler()?;
        if method.needs_set() && self.cond_set.is_none() {
            let what = if method == Method::Wvim { "the dropped feature group" } else { "the conditioning set" };
            return Err(CliError::config(format!(
                "--method {method} needs --cond-set with {what}, e.g. --cond-set x1,x2"
            )));
        }
        if self.reps == 0 {
            return Err(CliError::config("--reps must be at least 1"));
        }
        if self.mc_draws == 0 {
            return Err(CliError::config("--mc-draws must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::config("--train-fraction must lie in (0, 1)"));
        }
        match self.protocol.as_str() {
            "holdout" => {}
            "kfold" if self.folds >= 2 => {}
            "kfold" => return Err(CliError::config("--folds must be at least 2")),
            other => return Err(CliError::config(format!("--protocol: unknown protocol '{other}' (holdout, kfold)"))),
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::config("--level must lie in (0, 1)"));
        }
        if let Some(b) = self.ci_resamples {
            if b < 2 {
                return Err(CliError::config("--ci-resamples must be at least 2"));
            }
        }
        if let Some(m) = self.pimp {
            if m < MIN_NULLS {
                return Err(CliError::config(format!("--pimp must be at least {MIN_NULLS}")));
            }
            if self.ci_resamples.is_some() {
                return Err(CliError::config("--pimp and --ci-resamples cannot be combined"));
            }
        }
        if let Some(a) = &self.adjust {
            a.parse::<Adjustment>().map_err(|e| CliError::config(format!("--adjust: {e}")))?;
        }
        let ce = matches!(self.loss()?, Loss::CrossEntropy { .. });
        if ce && self.task != Task::BinaryClassification {
            return Err(CliError::config("--loss cross-entropy needs --task classification"));
        }
        if self.learner()? == LearnerKind::Logistic && self.task != Task::BinaryClassification {
            return Err(CliError::config("--learner logistic needs --task classification"));
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Method, CliError> {
        self.method.parse().map_err(|e| CliError::config(format!("--method: {e}")))
    }

    pub fn loss(&self) -> Result<Loss, CliError> {
        Loss::parse(&self.loss).ok_or_else(|| CliError::config(format!("--loss: unknown loss '{}' (l2, cross-entropy)", self.loss)))
    }

    pub fn learner(&self) -> Result<LearnerKind, CliError> {
        self.learner.parse().map_err(|e| CliError::config(format!("--learner: {e}")))
    }

    pub fn sampler(&self) -> Result<SamplerKind, CliError> {
        self.sampler.parse().map_err(|e| CliError::config(format!("--sampler: {e}")))
    }

    pub fn adjustment(&self) -> Option<Adjustment> {
        self.adjust.as_ref().and_then(|a| a.parse().ok())
    }

    /// Method configuration with the conditioning set resolved against the data.
    pub fn method_config(&self, data: &Dataset) -> Result<MethodConfig, CliError> {
        let mut m = MethodConfig::new(self.method()?).with_sampler(self.sampler()?).with_reps(self.reps);
        m.mc_draws = self.mc_draws;
        m.protocol = match self.protocol.as_str() {
            "kfold" => Protocol::KFold { k: self.folds },
            _ => Protocol::Holdout { train_fraction: self.train_fraction },
        };
        if let Some(names) = &self.cond_set {
            let mut idx = Vec::with_capacity(names.len());
            for n in names {
                let j = data
                    .column_index(n)
                    .map_err(|_| CliError::config(format!("--cond-set: unknown column '{n}' (columns: {})", data.names().join(", "))))?;
                idx.push(j);
            }
            m = m.with_set(idx);
        }
        Ok(m)
    }
}
