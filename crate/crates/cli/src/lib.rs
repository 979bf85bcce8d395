//! Command-line workflows over the `subcusum` library: simulate episodes,
//! calibrate the drift, run detection on recorded CSV data and estimate
//! operating curves.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};

pub use commands::{calibrate, curve, detect, simulate, Calibration, Detection};
pub use config::Params;

#[derive(Debug, Parser)]
#[command(name = "subcusum", version, about = "Multi-sensor change-point detection with Subspace-CUSUM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a seeded episode and write it as sensor CSV.
    Simulate(Params),
    /// Estimate the drift from a pre-change prefix of a sensor CSV.
    Calibrate(Params),
    /// Run a detector over a sensor CSV.
    Detect(Params),
    /// Monte Carlo ARL/EDD operating curve.
    Curve(Params),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error(transparent)]
    Core(#[from] subcusum::Error),
}

impl CliError {
    /// 0 success, 1 validation, 2 I/O, 3 numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        use subcusum::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) | CliError::Core(E::Io(_)) => 2,
            CliError::NonConvergence(_) | CliError::Core(E::NonConvergence { .. }) => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Parses nothing; runs an already parsed command and writes its outputs.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Simulate(p) => commands::run_simulate(&p.resolve()?),
        Cmd::Calibrate(p) => commands::run_calibrate(&p.resolve()?),
        Cmd::Detect(p) => commands::run_detect(&p.resolve()?),
        Cmd::Curve(p) => commands::run_curve(&p.resolve()?),
    }
}
