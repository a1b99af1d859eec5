//! Experiment runner for the multigrid-preconditioned interior point solver.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Bounds, Bump, Experiment, ExperimentConfig, LambdaRuleKind};
pub use experiments::{run, run_elliptic, run_parabolic, run_spectral_table, RunArtifacts};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Solver(#[from] mgipm_core::Error),
}

impl CliError {
    /// `1` for configuration and I/O problems, `2` for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(mgipm_core::Error::InvalidConfig(_)) => 1,
            CliError::Solver(_) => 2,
            _ => 1,
        }
    }
}
