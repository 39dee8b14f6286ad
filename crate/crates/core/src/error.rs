use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or unknown names.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("point behind/at source plane (w = {w})")]
    BehindSource { w: f64 },

    #[error("degenerate projection matrix")]
    DegenerateMatrix,

    #[error("projection {index} is invalid for the voxel grid: {reason}")]
    InvalidMatrix { index: usize, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("{path}: {message} at byte offset {offset}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run error: {0}")]
    Run(String),

    #[error("measurement error: {0}")]
    Measurement(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by files (missing, truncated, malformed).
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}
