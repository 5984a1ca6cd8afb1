use thiserror::Error;

/// Errors raised by the patrol library.
#[derive(Debug, Error)]
pub enum PatrolError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("chain is reducible: {0}")]
    Reducible(String),

    #[error("distribution is not stationary for the chain (residual {residual:.3e})")]
    NotStationary { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("state space of {entries} entries exceeds the budget of {cap}")]
    BudgetExceeded { entries: u128, cap: u128 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PatrolError>;
