use std::fmt;

use ssdespeckle::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// A failed command together with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    /// Failures while producing outputs are runtime failures whatever the
    /// underlying error.
    pub fn output(e: Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<Error> for CliError {
    /// Bad inputs, formats and settings exit with 2; failures that only
    /// show up while computing exit with 1.
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::Io { .. } | Error::Geometry(_) | Error::Domain(_) => {
                EXIT_USAGE
            }
            Error::DegenerateRegion(_) | Error::NonFinite(_) | Error::NonFiniteLoss { .. } => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
