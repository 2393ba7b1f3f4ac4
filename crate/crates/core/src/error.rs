use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path} at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("non-finite value at point {index}")]
    NonFinite { index: usize },

    #[error("mesh error in {path}: {reason}")]
    Mesh { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no occupied cells inside box centered at ({x:.3}, {y:.3}) with yaw {yaw:.4}")]
    NoMotion { x: f64, y: f64, yaw: f64 },

    #[error("no background cells left after excluding boxes")]
    NoBackground,

    #[error("placement exhausted after {attempts} attempts ({placed} of {requested} cars placed)")]
    PlacementExhausted {
        attempts: usize,
        placed: usize,
        requested: usize,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
