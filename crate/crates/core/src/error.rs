use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::TrainReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("index {index} out of range for {len} keypoints")]
    Bounds { index: usize, len: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at step {step} (total loss {total})")]
    Diverged {
        step: usize,
        total: f64,
        report: Box<TrainReport>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("schema error in key `{key}`: {msg}")]
    Schema { key: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
