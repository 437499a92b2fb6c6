use std::path::PathBuf;

/// Errors raised across the despeckling toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent shapes, channel counts or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A convolution or crop would produce an empty output.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An API was called in a way it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed file contents.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A variance-based index was evaluated on a region without variation.
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    /// NaN or infinity found where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss {loss} at iteration {iteration} (lr {lr})")]
    NonFiniteLoss { iteration: usize, lr: f64, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
