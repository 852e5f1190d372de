use thiserror::Error;

use crate::data::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("validation failed with {} row error(s)", .0.errors.len())]
    Validation(ValidationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown judge `{0}`")]
    UnknownJudge(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("perfect separation detected; diverging coefficients: {}", .features.join(", "))]
    PerfectSeparation { features: Vec<String> },

    #[error("singular information matrix: {0}")]
    Singular(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("schema mismatch at prediction: expected {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
