use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error("output directory is locked: {0}")]
    Locked(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Stage(#[from] courtaudit::Error),
}

/// Machine-readable record written to stderr on failure.
#[derive(Serialize)]
pub struct ErrorRecord<'a> {
    pub error: &'a str,
    pub stage: &'a str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "invalid_config",
            CliError::Prerequisite(_) => "missing_prerequisite",
            CliError::Locked(_) => "locked",
            CliError::Io(_) => "io",
            CliError::Stage(courtaudit::Error::Validation(_)) => "validation",
            CliError::Stage(_) => "stage_failure",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stage(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Prerequisite(_) => 3,
            CliError::Locked(_) => 4,
        }
    }

    pub fn record<'a>(&'a self, stage: &'a str) -> ErrorRecord<'a> {
        let details = match self {
            CliError::Stage(courtaudit::Error::Validation(report)) => serde_json::to_value(report).ok(),
            _ => None,
        };
        ErrorRecord {
            error: self.kind(),
            stage,
            message: self.to_string(),
            details,
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
