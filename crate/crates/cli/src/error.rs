use std::path::PathBuf;

use har_core::HarError;

/// Failures, each mapped to a fixed process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("verification failed:\n{0}")]
    Verify(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub const EXIT_OK: i32 = 0;
    pub const EXIT_RUNTIME: i32 = 1;
    pub const EXIT_MISSING_INPUT: i32 = 2;
    pub const EXIT_CONFIG: i32 = 3;
    pub const EXIT_VERIFY: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => Self::EXIT_MISSING_INPUT,
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Verify(_) => Self::EXIT_VERIFY,
            CliError::Runtime(_) => Self::EXIT_RUNTIME,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<HarError> for CliError {
    fn from(e: HarError) -> Self {
        match e {
            HarError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
