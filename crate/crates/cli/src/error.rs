use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VERIFICATION: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config field `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("config fields {fields}: {message}")]
    CrossField { fields: String, message: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    /// One or more checks of a report failed; the report has been printed.
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Core(#[from] fif_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => exit::VERIFICATION,
            CliError::Core(e) => core_exit_code(e),
            _ => exit::USAGE,
        }
    }
}

pub fn core_exit_code(e: &fif_core::Error) -> i32 {
    match e {
        fif_core::Error::NotConverged { .. } => exit::NOT_CONVERGED,
        e if e.is_verification_failure() => exit::VERIFICATION,
        _ => exit::USAGE,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
