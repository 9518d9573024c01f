use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("controller `{controller}` took {elapsed_ms:.1} ms against a {budget_ms:.1} ms budget")]
    BudgetOverrun {
        controller: String,
        elapsed_ms: f64,
        budget_ms: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
