use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{0}: bad magic, expected EMB1")]
    BadMagic(PathBuf),

    #[error("{path}: expected {expected} payload bytes, found {found}")]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("id count {found} does not match row count {expected}")]
    IdCountMismatch { expected: usize, found: usize },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("invalid id {0:?}: ids may not contain newlines")]
    InvalidId(String),

    #[error("row {id:?} has zero norm")]
    ZeroNorm { id: String },

    #[error("row {id:?} is not unit norm (norm {norm})")]
    NotNormalized { id: String, norm: f32 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("data length {len} is not a multiple of dimension {dim}")]
    RaggedData { len: usize, dim: usize },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("k = {k} exceeds usable reference count {available}")]
    KTooLarge { k: usize, available: usize },

    #[error("edge endpoint {endpoint} out of range for {n} rows")]
    EndpointOutOfRange { endpoint: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing {what} for id {id:?}")]
    Missing { what: &'static str, id: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("image {0}")]
    Image(String),

    #[error("jpeg encoding failed: {0}")]
    Jpeg(String),

    #[error("caption pool for {0:?} needs at least two distinct captions")]
    SingletonPool(String),

    #[error("unknown id {0:?}")]
    UnknownId(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
