use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input {}: {hint}", path.display())]
    MissingInput { path: PathBuf, hint: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_MISSING_INPUT: i32 = 3;
    pub const EXIT_RUNTIME: i32 = 4;
    /// Command-line usage errors (unknown subcommand, bad flag).
    pub const EXIT_USAGE: i32 = 64;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::MissingInput { .. } => Self::EXIT_MISSING_INPUT,
            CliError::Runtime(_) => Self::EXIT_RUNTIME,
        }
    }

    pub fn missing(path: impl Into<PathBuf>, hint: impl Into<String>) -> Self {
        CliError::MissingInput { path: path.into(), hint: hint.into() }
    }
}

impl From<usvsthem_core::Error> for CliError {
    fn from(e: usvsthem_core::Error) -> Self {
        match e {
            usvsthem_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<usvsthem_model::Error> for CliError {
    fn from(e: usvsthem_model::Error) -> Self {
        match e {
            usvsthem_model::Error::Config(m) => CliError::Config(m),
            usvsthem_model::Error::Core(c) => c.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
