//! IO companion for the duration-structured HIV model: layered TOML
//! configuration, CSV/JSON emission, run manifests and the CLI command
//! implementations.

pub mod commands;
pub mod config;
pub mod emit;
pub mod manifest;

use std::fmt;

/// Failure classification for exit codes: configuration and input
/// problems exit 1, numerical blow-ups exit 2.
#[derive(Debug)]
pub enum RunError {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Validation(e) => write!(f, "{e:#}"),
            RunError::Numerical(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<hivage_core::simulator::SimError> for RunError {
    fn from(e: hivage_core::simulator::SimError) -> Self {
        use hivage_core::simulator::SimError;
        match e {
            SimError::Params(_) | SimError::BadPrevalence(_) | SimError::GridMismatch { .. } => {
                RunError::Validation(anyhow::anyhow!("{e}"))
            }
            SimError::Degenerate { .. } => RunError::Numerical(anyhow::anyhow!("{e}")),
        }
    }
}

impl From<hivage_core::optimizer::OptimError> for RunError {
    fn from(e: hivage_core::optimizer::OptimError) -> Self {
        use hivage_core::optimizer::OptimError;
        match e {
            OptimError::Sim(inner) => inner.into(),
            OptimError::Mismatch(_) => RunError::Validation(anyhow::anyhow!("{e}")),
            OptimError::UndefinedPerformance => RunError::Numerical(anyhow::anyhow!("{e}")),
        }
    }
}

impl From<hivage_core::params::ParamError> for RunError {
    fn from(e: hivage_core::params::ParamError) -> Self {
        RunError::Validation(anyhow::anyhow!("{e}"))
    }
}

/// Shorthand for validation failures from IO and parsing.
pub fn invalid(e: impl Into<anyhow::Error>) -> RunError {
    RunError::Validation(e.into())
}
