//! `rbrw`: runs one experiment from a TOML config and writes CSV outputs
//! plus `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 1 runtime failure (including a run whose own
//! checks fail), 2 parse error, 3 validation error.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<rbrw_core::Error> for CliError {
    fn from(e: rbrw_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "rbrw", version, about = "Restrained branching random walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for replicas.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Replicas of one process; trajectory summaries and optional event log.
    Simulate,
    /// Nested monotone coupling with an ordering certificate per replica.
    Couple,
    /// First and second moment systems with immortal particles.
    Moments,
    /// Estimates of rho and theta.
    Spectral,
    /// Truncated-rate stationary measures and their diagnostics.
    Invariant,
    /// The four canonical phase scenarios.
    Phases,
    /// Finite-volume stabilization ladder.
    Volumes,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Moments => "moments",
            Command::Spectral => "spectral",
            Command::Invariant => "invariant",
            Command::Phases => "phases",
            Command::Volumes => "volumes",
        }
    }
}

fn execute(cli: &Cli) -> Result<run::Outcome, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Parse("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let dir = path.parent().map(PathBuf::from).unwrap_or_default();
    run::run(cli.command, &text, &dir, cli.seed, cli.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => match outcome.failure {
            None => {
                println!("outputs in {}", outcome.out_dir.display());
                ExitCode::SUCCESS
            }
            Some(msg) => {
                eprintln!("rbrw {}: {msg} (outputs in {})", cli.command.name(), outcome.out_dir.display());
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("rbrw {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
