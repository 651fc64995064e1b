use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid marker ({x}, {y}) for {width}x{height} image")]
    InvalidMarker {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("degenerate region: signed area {0:.4} px^2")]
    DegenerateRegion(f64),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
