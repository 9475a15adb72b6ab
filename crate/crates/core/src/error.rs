use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation axis is not unit length (norm {norm})")]
    NonUnitAxis { norm: f64 },
    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },
    #[error("matrix is not a rotation (orthogonality error {orthogonality_error}, det {determinant})")]
    NotARotation { orthogonality_error: f64, determinant: f64 },
    #[error("third-order parameters required at integration order 3")]
    MissingThirdOrder,
    #[error("unknown particle id {id} (table holds {len})")]
    UnknownParticle { id: usize, len: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("rotation loss requested but the dataset has no orientations")]
    MissingOrientation,
    #[error("non-finite gradient at weight {index}")]
    NonFiniteGradient { index: usize },
    #[error("fit diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed data: {0}")]
    MalformedData(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::TooFewPoints { .. } => ErrorKind::Config,
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
