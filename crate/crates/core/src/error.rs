use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("pair index {index} out of range for {p_units} primary units")]
    Index { index: usize, p_units: usize },

    /// Malformed or inconsistent input data. `line` is 1-based when known.
    #[error("data error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data {
        line: Option<usize>,
        message: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model has no output weights; train it first")]
    Untrained,

    #[error("model file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
