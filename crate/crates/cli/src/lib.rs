//! Command-line driver: prediction, Monte Carlo simulation and numerical
//! audits of the EDM fault-detection statistic.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 audit failure, 5 I/O error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use edm_raim::EigenOrdering;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

use config::{Overrides, RunConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("audit: {0}")]
    Audit(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Audit(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "edm-raim", version, about = "EDM-based GNSS fault detection: predict, simulate, audit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte Carlo trials; write trials.csv, summary.json, histogram.csv
    Simulate(RunArgs),
    /// Predict the nominal distribution of q; write prediction.json
    Predict(RunArgs),
    /// Finite-difference, centering and rank checks on the scenario
    Audit(RunArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub trials: Option<u64>,
    /// Master seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Pseudorange noise std, m
    #[arg(long, value_name = "M")]
    pub sigma: Option<f64>,
    /// Receiver clock bias, m
    #[arg(long, value_name = "M", allow_negative_numbers = true)]
    pub bias: Option<f64>,
    /// Extra artificial clock bias, m
    #[arg(long = "inflate-bias", value_name = "M", allow_negative_numbers = true)]
    pub inflate_bias: Option<f64>,
    /// False-alarm probability
    #[arg(long, value_name = "P")]
    pub pfa: Option<f64>,
    #[arg(long, value_enum)]
    pub ordering: Option<OrderingArg>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OrderingArg {
    Algebraic,
    Magnitude,
}

impl From<OrderingArg> for EigenOrdering {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::Algebraic => EigenOrdering::Algebraic,
            OrderingArg::Magnitude => EigenOrdering::Magnitude,
        }
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            n_trials: self.trials,
            seed: self.seed,
            sigma_v: self.sigma,
            bias_b: self.bias,
            bias_inflation: self.inflate_bias,
            p_fa: self.pfa,
            ordering: self.ordering.map(Into::into),
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

/// Runs one command, printing its report to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => println!("{}", commands::simulate(&a.resolve()?)?),
        Command::Predict(a) => println!("{}", commands::predict(&a.resolve()?)?),
        Command::Audit(a) => {
            let checks = commands::audit(&a.resolve()?)?;
            for c in &checks {
                println!("{c}");
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Audit(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}
