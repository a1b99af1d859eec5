use thiserror::Error;

/// Errors raised by the grid, operator, solver and diagnostic layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid request: {0}")]
    InvalidGrid(String),

    #[error("level mismatch: expected level {expected}, got {actual}")]
    LevelMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no {0} level available")]
    NoSuchLevel(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{solver} did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{solver} breakdown: {detail}")]
    Breakdown { solver: &'static str, detail: String },

    #[error("feasibility violated: {0}")]
    Infeasible(String),

    #[error("interior point method exceeded {0} outer iterations")]
    MaxOuterIterations(usize),

    #[error("matrix too large for dense processing: {n} > {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("singular matrix encountered at pivot {0}")]
    Singular(usize),

    #[error("QR iteration failed to converge for eigenvalue {0}")]
    EigenNotConverged(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
