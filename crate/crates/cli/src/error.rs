use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or malformed files, invalid values, failed checks.
    #[error("{0}")]
    Validation(String),
    #[error("{path}:{line}:{column}: {message}")]
    ConfigParse { path: String, line: usize, column: usize, message: String },
    /// Anything that is not the caller's fault, such as a failed write.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::ConfigParse { .. } => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn parse(path: &Path, line_offset: usize, e: &serde_json::Error) -> Self {
        // serde_json appends " at line L column C" to data errors; the position is carried separately
        let text = e.to_string();
        let message = match text.rfind(" at line ") {
            Some(i) => text[..i].to_string(),
            None => text,
        };
        CliError::ConfigParse { path: path.display().to_string(), line: e.line() + line_offset, column: e.column(), message }
    }
}

pub fn validation(e: impl Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}

pub type CliResult<T> = Result<T, CliError>;
