use std::path::PathBuf;

use thiserror::Error;

use crate::embedding::RecordKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("embedding-store: {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding-store: record {key}: dimension {found}, expected {expected}")]
    DimensionMismatch {
        key: RecordKey,
        expected: usize,
        found: usize,
    },

    #[error("embedding-store: duplicate record {0}")]
    DuplicateKey(RecordKey),

    #[error("embedding-store: record {key}: non-finite value at component {component}")]
    NonFinite { key: RecordKey, component: usize },

    #[error("embedding-store: record {0}: all-zero vector")]
    ZeroVector(RecordKey),

    #[error("embedding-store: record {key}: modality {found}, set holds {expected}")]
    MixedModality {
        key: RecordKey,
        expected: String,
        found: String,
    },

    #[error("embedding-store: layout is not rectangular: {0}")]
    NonRectangular(String),

    #[error("embedding-store: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("protocol: test set has no {0} records")]
    MissingSpectrum(String),

    #[error("matcher: dimension mismatch ({0} vs {1})")]
    VectorDimension(usize, usize),

    #[error("matcher: zero-norm vector")]
    ZeroNorm,

    #[error("matcher: pair {ordinal}: record {key} not found in {side} set")]
    UnresolvedKey {
        ordinal: usize,
        key: RecordKey,
        side: &'static str,
    },

    #[error("fusion: {0}")]
    Fusion(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("synth: {0}")]
    Synth(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
