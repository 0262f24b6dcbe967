use thiserror::Error;

/// Failures of a command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] hoc_core::Error),

    /// The command ran but some result is not acceptable (failed checks,
    /// unclean termination).
    #[error("{0}")]
    Rejected(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed branch file: {0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Format(_) => 2,
            CliError::Numerical(_) | CliError::Rejected(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
