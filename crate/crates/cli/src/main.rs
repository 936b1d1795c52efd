//! `fedrobust` experiment runner.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure, 3 query budget exhausted.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedrobust::Execution;

#[derive(Debug, Parser)]
#[command(name = "fedrobust", version, about = "Certified loss bounds for unseen federated networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the world seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the number of coverage trials.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the source network and write per-client CSVs plus a manifest.
    Simulate,
    /// Query the source clients and write one certificate per request.
    Certify,
    /// Run coverage experiments (and the tightness probe) for every request.
    Verify,
    /// Join certificates with empirical target curves into plot-ready CSVs.
    EmitPlots {
        /// Results directory written by `certify` (defaults to --out).
        results: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(String),
    Budget(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Budget(m) => write!(f, "budget exhausted: {m}"),
        }
    }
}

impl From<fedrobust::Error> for CliError {
    fn from(e: fedrobust::Error) -> Self {
        match e {
            fedrobust::Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn execution(jobs: Option<usize>) -> Result<Execution, CliError> {
    match jobs {
        None => Ok(Execution::Parallel),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
            Ok(Execution::Parallel)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = execution(cli.jobs)?;
    if let Command::EmitPlots { results } = &cli.command {
        let dir = results.clone().or(cli.out.clone()).ok_or_else(|| CliError::Usage("emit-plots needs a results directory".into()))?;
        return commands::emit_plots(&dir, exec);
    }
    let path = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut cfg = config::ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = cli.trials {
        if t == 0 {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        cfg.verify.trials = t;
    }
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out, exec),
        Command::Certify => commands::certify(&cfg, &out, exec),
        Command::Verify => commands::verify(&cfg, &out, exec),
        Command::EmitPlots { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
