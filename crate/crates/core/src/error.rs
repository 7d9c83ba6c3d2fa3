use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration or inputs rather
    /// than by a failure while running.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_) | Error::Configuration(_) | Error::GeometryMismatch(_)
        )
    }
}
