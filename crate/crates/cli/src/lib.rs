//! Command-line driver: reads a run configuration, runs one experiment and
//! writes its JSON report and CSV tables.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Report;
pub use config::{RunConfig, ValidationMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] barrier_mlmc::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    /// 1 for configuration and validation, 2 for numerical failures,
    /// 3 for the positivity-loss threshold.
    pub fn exit_code(&self) -> i32 {
        use barrier_mlmc::Error as E;
        match self {
            CliError::Config(_) | CliError::Output(_) => 1,
            CliError::Run(E::Parameter(_) | E::Contract(_)) => 1,
            CliError::Run(E::PositivityLoss { .. } | E::PositivityThreshold { .. }) => 3,
            CliError::Run(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bmlmc", version, about = "Multilevel Monte Carlo barrier option experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub validation: Option<ValidationMode>,
    /// Worker threads; does not change any result.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// MLMC price at each configured accuracy.
    Price,
    /// MLMC against single-level Monte Carlo cost over the accuracy list.
    Complexity,
    /// Strong convergence order of the scheme.
    Convergence,
    /// Density and CDF of the running maximum or minimum.
    Density,
    /// Mean and variance of the level corrections.
    Levels,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Complexity => "complexity",
            Command::Convergence => "convergence",
            Command::Density => "density",
            Command::Levels => "levels",
        }
    }
}

/// Loads the configuration, runs the command and writes its outputs.
pub fn execute(cli: &Cli) -> Result<(Report, PathBuf), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_overrides(cli.seed, cli.workers, cli.validation);
    let dir = cli.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let report = commands::run(cli.command, &cfg)?;
    report.write(&dir)?;
    Ok((report, dir))
}
