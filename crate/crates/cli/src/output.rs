//! Result file schema and the tidy CSV export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use featimp::result::relative;
use featimp::verify::VerificationReport;
use featimp::FIResult;

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOut {
    pub name: String,
    pub importance: f64,
    pub std_error: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    pub method: String,
    pub loss: String,
    pub learner: String,
    pub seed: u64,
    pub config: RunConfig,
    pub features: Vec<FeatureOut>,
    pub runtime_ms: u64,
}

impl ResultFile {
    pub fn new(config: RunConfig, result: &FIResult, runtime_ms: u64) -> Self {
        let features = result
            .features
            .iter()
            .map(|f| FeatureOut {
                name: f.name.clone(),
                importance: f.estimate,
                std_error: f.decision_std_error(),
                ci_low: f.ci_low,
                ci_high: f.ci_high,
                p_value: f.p_value,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            method: config.method.clone(),
            loss: result.loss.clone(),
            learner: config.learner.clone(),
            seed: config.seed,
            config,
            features,
            runtime_ms,
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::compute(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// One tidy row: a feature's estimate under one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TidyRow {
    pub feature: String,
    pub method: String,
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub relative_importance: f64,
}

fn tidy_group(method: &str, rows: Vec<(String, f64, Option<f64>, Option<f64>)>) -> Vec<TidyRow> {
    let rel = relative(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    rows.into_iter()
        .zip(rel)
        .map(|((feature, estimate, ci_low, ci_high), relative_importance)| TidyRow {
            feature,
            method: method.to_string(),
            estimate,
            ci_low,
            ci_high,
            relative_importance,
        })
        .collect()
}

/// Convert a result or verification report into tidy rows.
pub fn tidy(value: &serde_json::Value) -> Result<Vec<TidyRow>, CliError> {
    if value.get("features").is_some() {
        let r: ResultFile =
            serde_json::from_value(value.clone()).map_err(|e| CliError::data(format!("--in: not a result file: {e}")))?;
        let rows = r.features.into_iter().map(|f| (f.name, f.importance, f.ci_low, f.ci_high)).collect();
        return Ok(tidy_group(&r.method, rows));
    }
    if value.get("suite").is_some() {
        let v: VerificationReport = serde_json::from_value(value.clone())
            .map_err(|e| CliError::data(format!("--in: not a verification report: {e}")))?;
        let mut out = Vec::new();
        if let Some(f) = &v.figure2 {
            let mut keys: Vec<(String, String)> = Vec::new();
            for r in &f.table {
                let k = (r.learner.clone(), r.method.clone());
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
            for (learner, method) in keys {
                let rows = f
                    .table
                    .iter()
                    .filter(|r| r.learner == learner && r.method == method)
                    .map(|r| (r.feature.clone(), r.estimate, Some(r.estimate - 1.96 * r.std_error), Some(r.estimate + 1.96 * r.std_error)))
                    .collect();
                out.extend(tidy_group(&format!("{learner}/{method}"), rows));
            }
        }
        if let Some(cs) = &v.counterexamples {
            let rows = cs.iter().map(|c| (format!("{}:{}", c.dgp, c.name), c.estimate, None, None)).collect();
            out.extend(tidy_group("counterexample", rows));
        }
        if let Some(t) = &v.table1 {
            for c in &t.checks {
                let feature = match &c.given {
                    Some(g) => format!("{}:{}|{}", c.dgp, c.feature, g.join("+")),
                    None => format!("{}:{}", c.dgp, c.feature),
                };
                let method = format!("{}/{}/{}", c.row, c.model, c.loss);
                out.extend(tidy_group(&method, vec![(feature, c.estimate, None, None)]));
            }
        }
        return Ok(out);
    }
    Err(CliError::data("--in: expected a result file or a verification report"))
}

pub fn write_tidy<W: Write>(rows: &[TidyRow], w: W) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| CliError::compute(e.to_string()))?;
    }
    wtr.flush().map_err(|e| CliError::compute(e.to_string()))?;
    Ok(())
}
