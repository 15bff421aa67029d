use thiserror::Error;

/// Coarse classification of failures, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient audio: {got} samples, need at least {need}")]
    InsufficientAudio { got: usize, need: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("unknown labels for samples: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),

    #[error("missing files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),

    #[error("backward called without a recorded forward pass")]
    NoForward,

    #[error("invalid {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("resampling failed: {0}")]
    Resample(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_) | Error::NoForward | Error::Resample(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
