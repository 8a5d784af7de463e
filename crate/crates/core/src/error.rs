use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("test undefined: {0}")]
    UndefinedTest(String),

    #[error("unknown solver `{name}`; valid names: {}", valid.join(", "))]
    UnknownSolver { name: String, valid: Vec<String> },

    #[error("aggregation error: {message} ({})", files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Aggregation { message: String, files: Vec<PathBuf> },

    #[error("setup error: {0}")]
    Setup(String),

    #[error("malformed log {path}: {message}")]
    MalformedLog { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
