use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("RDP curves use different order grids")]
    GridMismatch,

    #[error("RDP curve is empty")]
    EmptyCurve,

    #[error("infeasible privacy budget: {0}")]
    InfeasibleBudget(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("truncation window [{lower}, {upper}] has numerically zero probability mass")]
    EmptyWindow { lower: f64, upper: f64 },

    #[error("selective release aborted: {0}")]
    ReleaseAborted(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("{path}: row {row}: {reason}")]
    Data {
        path: PathBuf,
        row: u64,
        reason: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
