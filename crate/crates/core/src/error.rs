use std::path::{Path, PathBuf};

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file violates a format rule or a type invariant.
    #[error("{origin}, record {position}: {message}")]
    Record {
        origin: String,
        position: usize,
        message: String,
    },

    /// A precondition on arguments or on the shape of the data does not hold.
    #[error("{0}")]
    Invalid(String),

    /// A statistic is undefined for the given input (for example zero variance).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn record(origin: impl Into<String>, position: usize, message: impl Into<String>) -> Self {
        Error::Record {
            origin: origin.into(),
            position,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    /// True for failures of the filesystem or network rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
