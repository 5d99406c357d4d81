use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column(s) {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: column `{0}` has zero variance")]
    UndefinedCorrelation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("singular design matrix (condition estimate {condition:.3e}): {message}")]
    Singular { message: String, condition: f64 },

    #[error("R² undefined: target has zero variance")]
    UndefinedR2,

    #[error("exact Shapley enumeration refused for {features} features (limit {limit}); use sampled mode")]
    ExactModeRefused { features: usize, limit: usize },

    #[error("empty result: {0}")]
    EmptyResult(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
