use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not unimodular: det = {det}, expected 1")]
    NotUnimodular { det: i64 },

    #[error("matrix is not hyperbolic: trace = {trace}, expected > 2")]
    NotHyperbolic { trace: i64 },

    /// Bad user-supplied value; maps to a usage error at the command line.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A request that would exceed a configured size limit.
    #[error("refused: {0}")]
    Budget(String),

    #[error("mismatched trajectories: {0}")]
    Mismatch(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
