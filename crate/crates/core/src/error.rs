use std::path::PathBuf;

use thiserror::Error;
use xinet_tensor::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file not found")]
    NotFound { path: PathBuf },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("variant mismatch: checkpoint is `{found}`, expected `{expected}`")]
    VariantMismatch { expected: String, found: String },
    #[error("unstable filter section: pole magnitude {0:.6} >= 1")]
    UnstableFilter(f64),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unknown {kind} `{name}` (available: {available})")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path }
        } else {
            Error::Io { path, source }
        }
    }
}
