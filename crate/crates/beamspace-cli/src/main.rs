//! Command-line front end for the beam-space MIMO modeling toolkit.
//!
//! Six subcommands cover the workflow end to end:
//!
//! * `synth-loads` — closed-form reactive load tables for a PSK schedule,
//! * `antenna-report` — pattern-level quality metrics (return loss, basis
//!   imbalance, orthogonality, EVM),
//! * `simulate` — frame-by-frame link simulation over a channel source,
//! * `analyze-dataset` — filter/average/normalize statistics of a channel
//!   ensemble file,
//! * `sweep` — mutual-information / capacity / symbol-error-rate curves
//!   over an SNR grid,
//! * `run` — the full scenario pipeline (collect → filter → average →
//!   normalize → metrics) with a versioned JSON summary.
//!
//! All artifacts are UTF-8 CSV or JSON, written with deterministic field
//! order and shortest round-trip float formatting, so identical
//! `(configuration, seed)` pairs produce byte-identical files. Exit codes:
//! 0 on success, 2 for configuration or input validation failures, 3 for
//! numerical failures inside a computation stage.

mod commands;
mod config;
mod report;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ScenarioConfig;

/// Failure modes of the front end, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable inputs, or an inconsistent configuration.
    #[error("{0}")]
    Validation(String),
    /// A computation stage failed (pole, singular system, empty reduction).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Shorthand constructor for validation failures.
pub fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Shorthand constructor for numerical failures.
pub fn numerical(msg: impl Into<String>) -> CliError {
    CliError::Numerical(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "beamspace",
    version,
    about = "Modeling and evaluation toolkit for single-radio spatial multiplexing"
)]
struct Cli {
    /// TOML scenario configuration (required by simulate, sweep and run)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; overrides the `seed` key of the configuration
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Directory artifacts are written into (created if missing)
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for parallel stages; 0 uses all cores
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize per-symbol reactive load tables from a scattering matrix
    SynthLoads(commands::synth_loads::SynthLoadsArgs),
    /// Report return loss, basis imbalance, orthogonality and EVM for one
    /// radiator (scattering matrix plus four state patterns)
    AntennaReport(commands::antenna_report::AntennaReportArgs),
    /// Run frame-by-frame link simulations over the configured channel source
    Simulate(commands::simulate::SimulateArgs),
    /// Filter, average, normalize and characterize a channel ensemble file
    AnalyzeDataset(commands::analyze_dataset::AnalyzeDatasetArgs),
    /// Sweep mutual information, capacity and symbol error rate over SNR
    Sweep(commands::sweep::SweepArgs),
    /// Execute the full scenario pipeline and write a versioned summary
    Run(commands::run::RunArgs),
}

/// Shared invocation state handed to every subcommand.
pub struct Context {
    config_path: Option<PathBuf>,
    seed_override: Option<u64>,
    out_dir: PathBuf,
}

impl Context {
    /// Loads and validates the scenario configuration, failing with a
    /// validation error when `--config` was not given.
    pub fn load_config(&self) -> Result<ScenarioConfig, CliError> {
        let path = self.config_path.as_deref().ok_or_else(|| {
            validation("--config: this subcommand requires a scenario configuration file")
        })?;
        ScenarioConfig::load(path)
    }

    /// The effective master seed: the `--seed` flag when present, otherwise
    /// the configured one.
    pub fn master_seed(&self, config: &ScenarioConfig) -> u64 {
        self.seed_override.unwrap_or(config.seed)
    }

    /// Absolute location of a named artifact inside the output directory.
    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| validation(format!("--threads: {e}")))?;
    }
    let ctx = Context {
        config_path: cli.config,
        seed_override: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::SynthLoads(args) => commands::synth_loads::execute(&ctx, &args),
        Command::AntennaReport(args) => commands::antenna_report::execute(&ctx, &args),
        Command::Simulate(args) => commands::simulate::execute(&ctx, &args),
        Command::AnalyzeDataset(args) => commands::analyze_dataset::execute(&ctx, &args),
        Command::Sweep(args) => commands::sweep::execute(&ctx, &args),
        Command::Run(args) => commands::run::execute(&ctx, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
