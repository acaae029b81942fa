use std::path::PathBuf;

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("i/o on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("missing guidance: {0}")]
    MissingGuidance(String),
    #[error("non-finite loss at iteration {iteration} (sample {sample})")]
    NonFinite { iteration: usize, sample: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("image: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Stable machine-readable category, printed by the command line tool.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor",
            Error::Config(_) => "config",
            Error::OutOfRange(_) => "out-of-range",
            Error::MissingFile(_) => "missing-file",
            Error::Io { .. } => "io",
            Error::Format { .. } => "malformed-file",
            Error::Manifest(_) => "malformed-manifest",
            Error::MissingGuidance(_) => "missing-guidance",
            Error::NonFinite { .. } => "non-finite",
            Error::Contract(_) => "contract",
            Error::UnknownPreset(_) => "unknown-preset",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
