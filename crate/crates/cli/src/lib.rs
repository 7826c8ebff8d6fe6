//! `fricsym` command-line runner: synthesize joint logs, fit friction models,
//! evaluate them, adapt them to new loads and estimate external torque.
//!
//! Every command writes its artifacts plus a `manifest.json` into `--out-dir`.
//! Exit codes: 0 success, 2 input or spec error, 3 fitting failure,
//! 4 model/data mismatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod manifest;
pub mod report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("model/data mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Fit(_) => EXIT_FIT,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fricsym", version, about = "Friction identification for robot joints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic joint log from a JSON generator spec.
    Synth(SynthArgs),
    /// Fit a friction model to a joint log.
    Fit(FitArgs),
    /// Evaluate a saved model on a joint log.
    Eval(EvalArgs),
    /// Learn an additive residual on top of a saved model.
    Adapt(AdaptArgs),
    /// Estimate external torque with a saved model.
    External(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Joint log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// One of sym, asym, gp, parfam.
    #[arg(long)]
    pub method: String,
    /// Comma-separated features; defaults to `qdot` for the Stribeck fits
    /// and `qdot,sgn_qdot` otherwise.
    #[arg(long)]
    pub features: Option<String>,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for splitting and every stochastic fit stage.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model artifact (JSON) written by `fit` or `adapt`.
    #[arg(long)]
    pub model: PathBuf,
    /// Joint log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Base model artifact (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Adaptation log (CSV) without external torque.
    #[arg(long)]
    pub data: PathBuf,
    /// Residual engine: gp or parfam.
    #[arg(long, default_value = "gp")]
    pub method: String,
    /// Residual features; `qdot` is not allowed.
    #[arg(long, default_value = "tau_g,sgn_tau_g,sgn_qdot")]
    pub features: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

fn init_runtime() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    if let Some(n) = std::env::var("FRICSYM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails harmlessly when a pool already exists in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Adapt(a) => commands::adapt(&a),
        Command::External(a) => commands::external(&a),
    }
}

/// Parses `args` (including the program name) and runs the command without
/// printing errors; help and version requests count as input errors.
pub fn try_run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_runtime();
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Input(e.to_string()))?;
    execute(cli)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_runtime();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
