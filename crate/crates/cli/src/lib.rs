//! Batch front end for the `commoninfo` library: argument parsing, command
//! drivers and the two output formats (aligned text tables and JSON records).

pub mod commands;
pub mod distfile;
pub mod record;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use commoninfo::csbs::CsbsError;
use commoninfo::graywyner::GrayWynerError;
use commoninfo::sim::SimError;
use commoninfo::wyner::{OptConfig, WynerError};
use serde::Serialize;
use thiserror::Error;

pub use record::{Output, RunRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: distfile::ParseError,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical inconsistency: {0}")]
    Inconsistent(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Io { .. } | CliError::Input(_) => 2,
            CliError::Inconsistent(_) => 3,
            CliError::Budget(_) => 4,
        }
    }
}

impl From<WynerError> for CliError {
    fn from(e: WynerError) -> Self {
        match e {
            WynerError::InconsistentEstimates { .. } | WynerError::NonConvergence { .. } => {
                CliError::Inconsistent(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            SimError::Wyner(w) => w.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<GrayWynerError> for CliError {
    fn from(e: GrayWynerError) -> Self {
        match e {
            GrayWynerError::Wyner(w) => w.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<CsbsError> for CliError {
    fn from(e: CsbsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<commoninfo::DistError> for CliError {
    fn from(e: commoninfo::DistError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "commoninfo",
    version,
    about = "Common information of finite-alphabet sources"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Records,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    #[serde(skip)]
    pub format: Format,
    /// Comparison tolerance in bits (cross-check for C, ordering checks).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Include wall-clock times and timestamps (breaks byte-identical reruns).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub timing: bool,
}

/// Optimizer knobs shared by every command that estimates `C`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct OptArgs {
    /// Alphabet size of the auxiliary variable (default: product of the alphabets).
    #[arg(long)]
    pub w_size: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Comma-separated, strictly increasing penalty weights.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Vec<f64>,
    /// Iteration cap per penalty stage.
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
}

impl OptArgs {
    pub fn config(&self, common: &CommonArgs) -> OptConfig {
        let mut cfg = OptConfig {
            w_size: self.w_size,
            restarts: self.restarts,
            max_iters: self.max_iters,
            seed: common.seed,
            ..OptConfig::default()
        };
        if !self.schedule.is_empty() {
            cfg.penalty_schedule = self.schedule.clone();
        }
        if let Some(t) = common.tol {
            cfg.cross_tol = t;
        }
        cfg
    }
}

/// Where a simulation gets its auxiliary model.
#[derive(Debug, Clone, Args, Serialize)]
pub struct WitnessArgs {
    /// JSON witness file written by `wyner --witness-out`.
    #[arg(long, conflicts_with = "wyner")]
    pub witness: Option<PathBuf>,
    /// Compute a witness with the optimizer first.
    #[arg(long)]
    pub wyner: bool,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
pub enum Command {
    /// Entropies, pairwise information and the Gacs-Korner common part.
    Measures {
        dist: PathBuf,
        /// Also estimate Wyner's common information and check the ordering.
        #[arg(long)]
        wyner: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Wyner's common information from both optimizer routes.
    Wyner {
        dist: PathBuf,
        #[command(flatten)]
        opt: OptArgs,
        /// Save the minimizing test channel as a JSON witness.
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Maximal conditional entropy under relaxed marginal and independence constraints.
    Gamma {
        dist: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        delta1: f64,
        #[arg(long, default_value_t = 0.0)]
        delta2: f64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Closed-form sweep over the binary symmetric mixture family.
    CsbsSweep {
        /// Comma-separated numbers of variables.
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        n: Vec<usize>,
        /// Pair crossover grid `lo:hi:count`.
        #[arg(long, conflicts_with = "a1_grid")]
        a0_grid: Option<String>,
        /// Per-variable crossover grid `lo:hi:count`.
        #[arg(long)]
        a1_grid: Option<String>,
        /// Write the comma-separated table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Check a rate tuple against the corner points of known witnesses.
    Region {
        dist: PathBuf,
        /// Common-link rate.
        #[arg(long)]
        r0: f64,
        /// Comma-separated private rates, one per variable.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Witness files; may be repeated.
        #[arg(long)]
        witness: Vec<PathBuf>,
        /// Add the optimizer's witness.
        #[arg(long)]
        wyner: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Random-codebook synthesis: divergence of the induced block law.
    SimGen {
        dist: PathBuf,
        #[command(flatten)]
        source: WitnessArgs,
        /// Block length.
        #[arg(long)]
        n: usize,
        /// Codebook rate in bits per symbol.
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 16)]
        codebooks: usize,
        /// Estimate by sampling instead of exact enumeration.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Random-binning Gray-Wyner codec with typicality decoding.
    SimCodec {
        dist: PathBuf,
        #[command(flatten)]
        source: WitnessArgs,
        #[arg(long)]
        n: usize,
        /// Common rate; defaults to the witness corner plus the margin.
        #[arg(long)]
        r0: Option<f64>,
        /// Private rates; default to the witness corner plus the margin.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 0.15)]
        margin: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Measures { .. } => "measures",
            Command::Wyner { .. } => "wyner",
            Command::Gamma { .. } => "gamma",
            Command::CsbsSweep { .. } => "csbs-sweep",
            Command::Region { .. } => "region",
            Command::SimGen { .. } => "sim-gen",
            Command::SimCodec { .. } => "sim-codec",
        }
    }
}

/// Runs one command and renders it in the requested format.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let output = commands::run(cli)?;
    Ok(match cli.common.format {
        Format::Table => output.table,
        Format::Records => output.record.to_json(),
    })
}
