//! Front end for the `srrw` binary: config parsing, subcommands and CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{Runtime, ValidateArgs};
use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Environment variable consulted when neither `--out` nor `output_dir` is set.
pub const OUT_DIR_ENV: &str = "SRRW_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "srrw-out";

#[derive(Debug, Parser)]
#[command(name = "srrw", version, about = "Self-repellent random walk experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigen-decomposition of the base chain (prints the SLEM).
    Spectrum(ExperimentArgs),
    /// Monte Carlo ensembles of the walk, one per alpha entry.
    Simulate(ExperimentArgs),
    /// Mean-field ODE trajectories for constant alpha values.
    Ode(ExperimentArgs),
    /// Closed-form asymptotic covariance over a grid of alpha values.
    Analyze(ExperimentArgs),
    /// Built-in acceptance checks.
    Validate(ValidateCliArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles; defaults to the core count capped by K.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; overrides `output_dir` and the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateCliArgs {
    /// Smaller instances for a fast smoke run.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated subset of check ids, e.g. `A1,A7`.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Negative control: A1 runs on kernels that break detailed balance.
    #[arg(long, hide = true)]
    pub inject_dbe_fault: bool,
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = ExperimentConfig::parse(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn prepare(args: &ExperimentArgs) -> Result<(ExperimentConfig, Runtime), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (&args.out, &cfg.output_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => base_dir.join(dir),
        (None, None) => std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from),
    };
    Ok((cfg, Runtime { base_dir, out_dir, workers: args.workers }))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Spectrum(args) => {
            let (cfg, rt) = prepare(&args)?;
            let s = commands::spectrum(&cfg, &rt)?;
            println!("SLEM {s}");
        }
        Command::Simulate(args) => {
            let (cfg, rt) = prepare(&args)?;
            commands::simulate(&cfg, &rt)?;
        }
        Command::Ode(args) => {
            let (cfg, rt) = prepare(&args)?;
            commands::ode(&cfg, &rt)?;
        }
        Command::Analyze(args) => {
            let (cfg, rt) = prepare(&args)?;
            commands::analyze(&cfg, &rt)?;
        }
        Command::Validate(args) => {
            if args.workers == Some(0) {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            commands::validate(&ValidateArgs {
                quick: args.quick,
                seed: args.seed,
                workers: args.workers,
                only: args.only,
                inject_dbe_fault: args.inject_dbe_fault,
            })?;
        }
    }
    Ok(())
}
