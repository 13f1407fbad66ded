use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty selection: {0}")]
    Empty(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("no labeled points: seed the active-learning loop before training")]
    NoLabeledPoints,

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: i64, class_count: usize },

    #[error("region {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("regions overlap at point {0}")]
    OverlappingRegions(usize),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
