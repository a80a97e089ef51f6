use std::path::PathBuf;

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "input {height}x{width} is not divisible by {multiple}; pad by {pad_height} rows and {pad_width} columns"
    )]
    IndivisibleInput {
        height: usize,
        width: usize,
        multiple: usize,
        pad_height: usize,
        pad_width: usize,
    },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("non-finite loss at epoch {epoch}, step {step}; last good checkpoint: {}", last_good.as_ref().map_or("none".into(), |p| p.display().to_string()))]
    NonFiniteLoss {
        epoch: u64,
        step: u64,
        last_good: Option<PathBuf>,
    },

    #[error("textureless patch: disparity undefined")]
    Textureless,

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
