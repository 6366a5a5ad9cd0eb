use std::io;

use thiserror::Error;

use crate::domain::ModelKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding one of the binary containers (`.rnds`, `.rnnw`).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("version mismatch: file has version {found}, reader supports {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("truncation: {0}")]
    Truncated(String),
    #[error("checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumFailure { stored: u32, computed: u32 },
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("invalid model key bytes {0:?}")]
    BadKey([u8; 3]),
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid column: {0}")]
    InvalidColumn(String),
    #[error("sky mismatch: key expects {expected:?}, column classifies as {found:?}")]
    SkyMismatch {
        expected: crate::domain::Sky,
        found: crate::domain::Sky,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no matching samples for key {0}")]
    NoMatchingSamples(ModelKey),
    #[error("cannot draw {requested} samples: {reason}")]
    ImpossibleSampleCount { requested: usize, reason: String },
    #[error("non-finite loss at epoch {epoch} (train loss {train_loss}, val loss {val_loss})")]
    NonFiniteLoss {
        epoch: usize,
        train_loss: f64,
        val_loss: f64,
    },
    #[error("emulator bank is missing model {0}")]
    MissingKey(ModelKey),
    #[error("emulator bank has duplicate model {0}")]
    DuplicateKey(ModelKey),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(path: impl AsRef<std::path::Path>, source: FormatError) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Underlying container error, if this is one.
    pub fn format_kind(&self) -> Option<&FormatError> {
        match self {
            Error::Format { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// In-memory decode failures carry no path.
impl From<FormatError> for Error {
    fn from(source: FormatError) -> Self {
        Error::format("<memory>", source)
    }
}
