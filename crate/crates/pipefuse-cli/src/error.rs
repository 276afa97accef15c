//! CLI error classes mapped to exit codes: 0 success, 1 usage or
//! configuration error, 2 data error.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// Wrap an I/O failure with the path it concerns.
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// Wrap a JSON parse failure with the file it concerns; serde_json
    /// reports line and column.
    pub fn json(path: &std::path::Path, err: serde_json::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
