use std::fmt;
use std::process::ExitCode;

use speakgen::Error;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad configuration or an impossible request. Exit 1.
    Usage(String),
    /// Missing, unreadable, corrupt or inconsistent inputs. Exit 2.
    Data(String),
    /// Non-finite values during training. Exit 3.
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Divergence(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub trait Context<T> {
    /// Attaches the path or subject of a failed operation.
    fn context(self, what: impl fmt::Display) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, Error> {
    fn context(self, what: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            other => other,
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Data(format!("{what}: {e}")))
    }
}
