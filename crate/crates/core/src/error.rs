use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid selection matrix: {0}")]
    InvalidSelection(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid stepsizes: {0}")]
    InvalidStepsizes(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
