//! `featimp`: feature importance on CSV data, synthetic processes and the
//! verification suites.

mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use featimp::dgp::builtin;
use featimp::inference::{adjust_pvalues, attach_p_values, learner_fi_ci, pimp};
use featimp::learners::{Learner, LearnerSpec};
use featimp::verify::{self, Suite};
use featimp::{Dataset, FIResult, FiError};

use config::RunConfig;
use output::{tidy, write_json, write_tidy, ResultFile};

#[derive(Parser)]
#[command(name = "featimp", version, about = "Loss-based feature importance with inference and ground-truth checks")]
struct Cli {
    /// Cap the number of worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate feature importance on a CSV dataset
    Analyze(Box<AnalyzeArgs>),
    /// Sample a built-in data-generating process to CSV with a ground-truth sidecar
    Simulate(SimulateArgs),
    /// Run a verification suite against known ground truth
    Verify(VerifyArgs),
    /// Convert a result or verification JSON file into a tidy CSV
    Report(ReportArgs),
}

#[derive(Args, Default)]
pub struct AnalyzeArgs {
    /// JSON config (a bare config or a previous result file); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column name
    #[arg(long)]
    pub target: Option<String>,
    /// regression or classification (default: inferred from loss and learner)
    #[arg(long)]
    pub task: Option<String>,
    /// pfi, cfi, rfi, msagevf, csagevf, scsagevf, msage, csage, loco, wvim, swvim, loci
    #[arg(long)]
    pub method: Option<String>,
    /// l2 or cross-entropy
    #[arg(long)]
    pub loss: Option<String>,
    /// constant, ols, ols-interactions, knn, bagged-trees, logistic
    #[arg(long)]
    pub learner: Option<String>,
    /// permutation, gaussian, knn or knn-<k>
    #[arg(long)]
    pub sampler: Option<String>,
    /// Repetitions per perturbation estimate (default 10)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Monte Carlo draws per reduced-model prediction
    #[arg(long)]
    pub mc_draws: Option<usize>,
    /// Master seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated conditioning set (rfi, scsagevf, swvim) or dropped group (wvim)
    #[arg(long)]
    pub cond_set: Option<String>,
    /// holdout or kfold
    #[arg(long)]
    pub protocol: Option<String>,
    /// Holdout training share for refit methods (default 0.7)
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Number of folds for --protocol kfold (default 5)
    #[arg(long)]
    pub folds: Option<usize>,
    /// Learner-level CIs from this many subsamples
    #[arg(long)]
    pub ci_resamples: Option<usize>,
    /// Confidence level (default 0.95)
    #[arg(long)]
    pub level: Option<f64>,
    /// PIMP p-values from this many permuted-target refits
    #[arg(long)]
    pub pimp: Option<usize>,
    /// holm or benjamini-hochberg
    #[arg(long)]
    pub adjust: Option<String>,
    /// Result JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional flat CSV table of the result
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dgp: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path (default: <dgp>.csv); the sidecar is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// table1, counterexamples, figure2 or all
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { code: 2, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: 3, message: msg.into() }
    }

    pub fn compute(msg: impl Into<String>) -> Self {
        Self { code: 4, message: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    /// Library errors raised while computing; argument errors found this late
    /// still point at the configuration.
    fn from_compute(e: FiError) -> Self {
        match e {
            FiError::InvalidArgument(_) | FiError::UnknownColumn(_) => Self::config(e.to_string()),
            _ => Self::compute(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Verify(a) => run_verify(&a),
        Command::Report(a) => report(&a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = Path::new(&cfg.data);
    Dataset::from_csv_path(path, &cfg.target, cfg.task).map_err(|e| match e {
        FiError::UnknownColumn(c) => CliError::data(format!("--target: column '{c}' not found in {}", path.display())),
        other => CliError::data(format!("--data {}: {other}", path.display())),
    })
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::resolve(args)?;
    let data = load_data(&cfg)?;
    let method = cfg.method_config(&data)?;
    let loss = cfg.loss()?;
    let learner: Arc<dyn Learner> = Arc::new(LearnerSpec::new(cfg.learner()?));

    let start = Instant::now();
    let mut result: FIResult = if let Some(b) = cfg.ci_resamples {
        learner_fi_ci(&learner, &data, loss, &method, b, cfg.level, cfg.seed).map_err(CliError::from_compute)?
    } else if let Some(m) = cfg.pimp {
        pimp(&learner, &data, loss, &method, m, cfg.seed).map_err(CliError::from_compute)?.observed
    } else {
        let mut r = method.analyze(&learner, &data, loss, cfg.seed).map_err(CliError::from_compute)?;
        attach_p_values(&mut r).map_err(CliError::from_compute)?;
        r
    };
    if let Some(adj) = cfg.adjustment() {
        let idx: Vec<usize> = (0..result.features.len()).filter(|&k| result.features[k].p_value.is_some()).collect();
        let raw: Vec<f64> = idx.iter().map(|&k| result.features[k].p_value.unwrap()).collect();
        let adjusted = adjust_pvalues(&raw, adj).map_err(CliError::from_compute)?;
        for (k, p) in idx.into_iter().zip(adjusted) {
            result.features[k].p_value = Some(p);
        }
    }
    let runtime_ms = start.elapsed().as_millis() as u64;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    let file = ResultFile::new(cfg.clone(), &result, runtime_ms);
    print_summary(&file);
    if let Some(out) = &cfg.out {
        write_json(&file, Path::new(out))?;
    }
    if let Some(csv_path) = &cfg.csv {
        let value = serde_json::to_value(&file).map_err(|e| CliError::compute(e.to_string()))?;
        let rows = tidy(&value)?;
        let f = std::fs::File::create(csv_path).map_err(|e| CliError::io(Path::new(csv_path), e))?;
        write_tidy(&rows, f)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(file: &ResultFile) {
    let mut order: Vec<usize> = (0..file.features.len()).collect();
    order.sort_by(|&a, &b| file.features[b].importance.total_cmp(&file.features[a].importance));
    println!("{} ({}, {} loss, seed {})", file.method, file.learner, file.loss, file.seed);
    let width = file.features.iter().map(|f| f.name.len()).max().unwrap_or(7).max(7);
    println!("{:>4}  {:<width$}  {:>12}  {:>10}  {:>10}", "rank", "feature", "importance", "std_error", "p_value");
    for (rank, &k) in order.iter().enumerate() {
        let f = &file.features[k];
        let p = f.p_value.map_or_else(|| "-".to_string(), |p| format!("{p:.4}"));
        println!("{:>4}  {:<width$}  {:>12.6}  {:>10.6}  {:>10}", rank + 1, f.name, f.importance, f.std_error, p);
    }
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode, CliError> {
    let spec = builtin(&args.dgp).map_err(|e| CliError::config(format!("--dgp: {e}")))?;
    if args.n == 0 {
        return Err(CliError::config("--n must be at least 1"));
    }
    let data = spec.sample(args.n, args.seed).map_err(CliError::from_compute)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", args.dgp)));
    let file = std::fs::File::create(&out).map_err(|e| CliError::io(&out, e))?;
    data.write_csv(std::io::BufWriter::new(file), "y").map_err(|e| CliError::data(e.to_string()))?;
    let sidecar = out.with_extension("truth.json");
    write_json(&spec.ground_truth(), &sidecar)?;
    println!("wrote {} rows to {} and ground truth to {}", args.n, out.display(), sidecar.display());
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: &VerifyArgs) -> Result<ExitCode, CliError> {
    let suite: Suite = args.suite.parse().map_err(|e: FiError| CliError::config(format!("--suite: {e}")))?;
    let report = verify::run(suite, args.seed).map_err(CliError::from_compute)?;
    if let Some(t) = &report.table1 {
        for c in &t.coverage {
            println!(
                "{:<16} checks {:>4}  fired {:>3}  pass {:>4}  fail {:>2}  vacuous {:>4}",
                c.row, c.checks, c.fired, c.passed, c.failed, c.vacuous
            );
        }
        println!("row coverage {:.0}%", 100.0 * t.row_coverage);
    }
    for c in report.counterexamples.iter().flatten() {
        println!("{} {}: {}", if c.confirmed { "confirmed" } else { "NOT confirmed" }, c.name, c.detail);
    }
    if let Some(f) = &report.figure2 {
        for a in &f.assertions {
            println!("{} {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
        }
    }
    for line in report.failures() {
        eprintln!("failed: {line}");
    }
    println!("suite {} {} in {} ms", suite, if report.passed { "passed" } else { "failed" }, report.runtime_ms);
    if let Some(out) = &args.out {
        write_json(&report, out)?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn report(args: &ReportArgs) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("--in {}: invalid JSON: {e}", args.input.display())))?;
    let rows = tidy(&value)?;
    let f = std::fs::File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_tidy(&rows, f)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
