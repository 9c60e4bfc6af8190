use std::path::PathBuf;

/// Errors produced by the geometry, loss and optimization routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose shapes or parameters are inconsistent with each other.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A point at or behind the camera plane was projected.
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    /// The optimizer could not make progress on the given data.
    #[error("optimization failed: {0}")]
    Optimization(String),

    /// A file could not be read, written or parsed.
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the optimizer itself rather than of its inputs.
    pub fn is_optimization_failure(&self) -> bool {
        matches!(self, Error::Optimization(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
