//! Subcommand surface: argument types and dispatch.

pub mod controlled;
pub mod optimize;
pub mod report;
pub mod sensitivity;
pub mod simulate;
pub mod surface;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{self, Loaded};
use crate::{invalid, manifest, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "hivage",
    version,
    about = "Three-stage duration-structured HIV transmission model: \
             simulation, equilibria, ART optimal control and sensitivity analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the basic reproduction number and kernel integrals as JSON.
    R0(report::ReportArgs),
    /// Print both equilibria (and the kernels behind them) as JSON.
    Equilibrium(report::ReportArgs),
    /// Integrate the base model and write the trajectory as CSV.
    Simulate(simulate::SimulateArgs),
    /// Integrate the ART-controlled model under controls read from CSV.
    SimulateControlled(controlled::ControlledArgs),
    /// Solve the optimal-control problem by forward-backward sweep.
    Optimize(optimize::OptimizeArgs),
    /// Map intervention performance over drop-out probabilities.
    SweepPerformance(surface::SurfaceArgs),
    /// Full-factorial sensitivity of the cumulative AIDS burden.
    Sensitivity(sensitivity::SensitivityArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration; omitted keys fall back to reference defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable), highest precedence.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Common {
    pub fn load(&self) -> Result<Loaded, RunError> {
        config::load(self.config.as_deref(), &self.set).map_err(RunError::Validation)
    }

    pub fn require_out(&self) -> Result<&Path, RunError> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| invalid(anyhow::anyhow!("this subcommand requires --out DIR")))?;
        std::fs::create_dir_all(dir).map_err(invalid)?;
        Ok(dir)
    }
}

/// Runs `f` inside a bounded rayon pool when `--jobs` was given.
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| invalid(anyhow::anyhow!("building worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn dispatch(cli: Cli) -> Result<(), RunError> {
    let started = Instant::now();
    match cli.command {
        Command::R0(args) => report::run(&args, "r0", started),
        Command::Equilibrium(args) => report::run(&args, "equilibrium", started),
        Command::Simulate(args) => simulate::run(&args, started),
        Command::SimulateControlled(args) => controlled::run(&args, started),
        Command::Optimize(args) => optimize::run(&args, started),
        Command::SweepPerformance(args) => surface::run(&args, started),
        Command::Sensitivity(args) => sensitivity::run(&args, started),
    }
}

pub(crate) fn finish_manifest(
    dir: &Path,
    subcommand: &str,
    loaded: &Loaded,
    started: Instant,
) -> Result<(), RunError> {
    manifest::write(dir, subcommand, &loaded.config, started.elapsed()).map_err(invalid)
}
