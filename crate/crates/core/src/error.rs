use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },

    #[error("manifest row {row}: duplicate sample id `{id}`")]
    DuplicateId { row: usize, id: String },

    #[error("row {row} (id `{id}`): label `{value}` is not 0 or 1")]
    InvalidLabel { row: usize, id: String, value: String },

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownConfigKey { line: usize, key: String },

    #[error("config line {line}: cannot parse `{value}` for `{key}`")]
    ConfigValue {
        line: usize,
        key: String,
        value: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("video error on {path}: {message}")]
    Video { path: PathBuf, message: String },

    #[error("face detector failed on frame {frame}: {message}")]
    Detector { frame: usize, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("need at least {needed} {label} sample(s) in the training split, found {found}")]
    InsufficientClass {
        label: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("single-class input: {0}")]
    SingleClass(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path} already exists (pass --overwrite to replace it)")]
    WouldClobber { path: PathBuf },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
