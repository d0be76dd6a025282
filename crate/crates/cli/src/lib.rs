//! Config-driven experiment runner for `idxtrack`.
//!
//! Subcommands: `simulate`, `track`, `vxx`, `calibrate`, `verify`. Each
//! takes `--config <file>`, `--out <dir>`, `--paths N`, `--seed N` and
//! `--dt X`; without `--config` a built-in preset is used (see
//! [`presets`]). Key names are documented in [`config`].
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! error or failed verification.
//!
//! Default step sizes: `1e-4` years for `verify`, `1/252` for the figure presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ExperimentConfig, Overrides};
pub use output::{emit_plotdata, SeriesMap};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(#[from] idxtrack::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Verification(_) => 3,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CliError::Io(io),
                other => CliError::Config(format!("{other:?}")),
            }
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "idxtrack", version, about = "Index tracking experiments with derivatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Simulate,
    Track,
    Vxx,
    Calibrate,
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate state paths and write them as CSV.
    Simulate(CommonArgs),
    /// Run constant-exposure tracking portfolios against their benchmarks.
    Track(CommonArgs),
    /// Run the futures roll and the dynamic β = 1 portfolio under CIR.
    Vxx(CommonArgs),
    /// Fit a CIR futures curve to quotes.
    Calibrate(CalibrateArgs),
    /// Run the pathwise identity and invariant checks.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML); the built-in preset is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time step in years.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Quote CSV with header `maturity_years,price`.
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    /// Current index level.
    #[arg(long)]
    pub spot: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            dt: self.dt,
            out: self.out.clone(),
        }
    }
}

/// Loads the config (or preset) for `kind` and applies command-line overrides.
pub fn resolve_config(kind: Kind, args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => presets::preset(kind)?,
    };
    cfg.apply(&args.overrides());
    Ok(cfg)
}

/// Runs one parsed command; returns the report printed on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&resolve_config(Kind::Simulate, a)?),
        Command::Track(a) => commands::track(&resolve_config(Kind::Track, a)?),
        Command::Vxx(a) => commands::vxx(&resolve_config(Kind::Vxx, a)?),
        Command::Calibrate(a) => {
            let mut cfg = resolve_config(Kind::Calibrate, &a.common)?;
            let cal = cfg.calibration.get_or_insert_with(Default::default);
            if let Some(q) = &a.quotes {
                cal.quotes_file = Some(q.clone());
                cal.quotes = None;
            }
            if let Some(s) = a.spot {
                cal.spot = Some(s);
            }
            commands::calibrate(&cfg)
        }
        Command::Verify(a) => verify::run_verify(&resolve_config(Kind::Verify, a)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numerical(idxtrack::Error::DegenerateMaturities).exit_code(), 3);
        assert_eq!(CliError::Io(std::io::Error::other("x")).exit_code(), 1);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from(["idxtrack", "track", "--seed", "9", "--dt", "0.001", "--paths", "3"]).unwrap();
        let Command::Track(a) = cli.command else { panic!() };
        assert_eq!((a.seed, a.paths, a.dt), (Some(9), Some(3), Some(0.001)));
        let cli = Cli::try_parse_from(["idxtrack", "calibrate", "--spot", "0.18"]).unwrap();
        assert!(matches!(cli.command, Command::Calibrate(CalibrateArgs { spot: Some(_), .. })));
    }
}
