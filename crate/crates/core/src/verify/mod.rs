//! Verification harness: interpretation rules, counterexamples and the
//! illustrative simulation, each checked against known ground truth.

mod counterexamples;
mod figure2;
mod table1;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FiError, Result};
use crate::result::z_quantile;

pub use counterexamples::{run_counterexamples, Counterexample};
pub use figure2::{run_figure2, Figure2Options, Figure2Report, ModelQuality, RelativeRow};
pub use table1::{run_table1, ImplicationCheck, Row, RowCoverage, Table1Options, Table1Report};

pub const SCHEMA_VERSION: u32 = 1;

/// Threshold on `|estimate| / se` for a "non-zero" decision.
pub const Z_THRESHOLD: f64 = 3.0;
/// A "zero" decision also needs a CI narrower than this fraction of the scale.
pub const ZERO_WIDTH_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    NonZero,
    Zero,
    Undecided,
}

/// Classify an estimate with standard error `se`. `scale` is the magnitude
/// the zero-width floor is relative to.
pub fn decide(estimate: f64, se: f64, scale: f64) -> Decision {
    if estimate.abs() > Z_THRESHOLD * se {
        return Decision::NonZero;
    }
    let width = 2.0 * z_quantile(crate::result::DEFAULT_LEVEL) * se;
    if width <= ZERO_WIDTH_FRACTION * scale.abs() {
        Decision::Zero
    } else {
        Decision::Undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Table1,
    Counterexamples,
    Figure2,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 4] = ["table1", "counterexamples", "figure2", "all"];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Table1 => "table1",
            Suite::Counterexamples => "counterexamples",
            Suite::Figure2 => "figure2",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

impl FromStr for Suite {
    type Err = FiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Suite::Table1),
            "counterexamples" => Ok(Suite::Counterexamples),
            "figure2" => Ok(Suite::Figure2),
            "all" => Ok(Suite::All),
            _ => Err(invalid(format!("unknown suite '{s}' (available: {})", Suite::NAMES.join(", ")))),
        }
    }
}

/// Combined, machine-readable verification output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table1: Option<Table1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexamples: Option<Vec<Counterexample>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure2: Option<Figure2Report>,
    pub runtime_ms: u64,
}

impl VerificationReport {
    /// One line per failed check, for printing.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(t) = &self.table1 {
            for c in t.checks.iter().filter(|c| c.outcome == Outcome::Fail) {
                out.push(format!("table1 {} {} {} {}: {}", c.row, c.dgp, c.model, c.feature, c.estimate));
            }
        }
        for c in self.counterexamples.iter().flatten().filter(|c| !c.confirmed) {
            out.push(format!("counterexample {}: {}", c.name, c.detail));
        }
        if let Some(f) = &self.figure2 {
            for a in f.assertions.iter().filter(|a| !a.passed) {
                out.push(format!("figure2 {}: {}", a.name, a.detail));
            }
        }
        out
    }
}

/// A named boolean assertion with a human-readable detail string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run one suite (or all) with default options.
pub fn run(suite: Suite, seed: u64) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport {
        schema_version: SCHEMA_VERSION,
        suite,
        seed,
        passed: true,
        table1: None,
        counterexamples: None,
        figure2: None,
        runtime_ms: 0,
    };
    if matches!(suite, Suite::Table1 | Suite::All) {
        let t = run_table1(&Table1Options::default(), seed)?;
        report.passed &= t.passed;
        report.table1 = Some(t);
    }
    if matches!(suite, Suite::Counterexamples | Suite::All) {
        let c = run_counterexamples(seed)?;
        report.passed &= c.iter().all(|c| c.confirmed);
        report.counterexamples = Some(c);
    }
    if matches!(suite, Suite::Figure2 | Suite::All) {
        let f = run_figure2(&Figure2Options::default(), seed)?;
        report.passed &= f.passed;
        report.figure2 = Some(f);
    }
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}
