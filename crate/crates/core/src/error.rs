use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wav decode error in `{chunk}` chunk: {reason}")]
    Decode { chunk: String, reason: String },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("signal of {len} samples is shorter than window length {win_length}")]
    EmptyFrame { len: usize, win_length: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("trailing data: {0} unexpected bytes after payload")]
    TrailingData(usize),

    #[error("dimension overflow: {rows} x {cols} does not fit in memory")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("unknown feature kind tag {0}")]
    UnknownKind(u8),

    #[error("config digest mismatch: checkpoint has {checkpoint}, data has {data}")]
    DigestMismatch { checkpoint: String, data: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("audio too short: {samples} samples at {sample_rate} Hz is under one second")]
    TooShort { samples: usize, sample_rate: u32 },

    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("missing features: {0}")]
    MissingFeatures(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wrapped {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::Wrapped { .. }) => e,
            e => Error::Wrapped {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn decode(chunk: &str, reason: impl Into<String>) -> Self {
        Error::Decode {
            chunk: chunk.to_string(),
            reason: reason.into(),
        }
    }
}
