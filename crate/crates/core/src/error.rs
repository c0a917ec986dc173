use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Error, Debug)]
pub enum MaladyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("auction did not terminate after {events} bidding events ({context})")]
    NonTermination { events: usize, context: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MaladyError>;

impl MaladyError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MaladyError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            MaladyError::InvalidParameter(_)
            | MaladyError::InvalidInput(_)
            | MaladyError::Config(_)
            | MaladyError::Json(_) => 2,
            MaladyError::Infeasible(_) => 3,
            MaladyError::Io { .. } | MaladyError::Format { .. } => 4,
            MaladyError::InvalidState(_) | MaladyError::NonTermination { .. } => 1,
        }
    }
}
