use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_IO: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] vinolab::Error),
    #[error("invalid input: {0}")]
    Validation(String),
    /// Malformed configuration outside the flags, e.g. the budget variable.
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed record: {message}")]
    Record { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_budget() => EXIT_BUDGET,
            CliError::Core(_) | CliError::Validation(_) | CliError::Record { .. } => EXIT_VALIDATION,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
