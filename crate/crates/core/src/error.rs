use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("forward cache does not belong to these parameters")]
    StaleCache,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("recent history buffer is not warm")]
    ColdBuffer,

    #[error("step response did not settle within {horizon} steps (channel {channel})")]
    Unsettled { channel: String, horizon: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("every particle diverged")]
    SwarmDiverged,

    #[error("incompatible experiment: {0}")]
    Incompatible(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
