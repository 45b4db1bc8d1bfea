//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Filesystem-level failure (open/read/write/rename).
    Io { path: PathBuf, source: std::io::Error },
    /// A file exists but its contents could not be decoded.
    Decode { path: PathBuf, detail: String },
    /// Structurally valid input that violates a precondition or invariant.
    InvalidInput(String),
    /// Two operands whose dimensions must agree do not.
    ShapeMismatch(String),
    /// A value escaped its documented domain (non-finite, out-of-range index, ...).
    OutOfDomain(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Decode { path: path.into(), detail: detail.into() }
    }

    /// True for failures of the surrounding system (missing files, broken
    /// media) as opposed to failures of the request itself. The CLI maps
    /// these to a distinct exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Decode { .. })
    }
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            Error::Decode { path, detail } => write!(f, "{}: {}", path.display(), detail),
            Error::InvalidInput(msg) => write!(f, "invalid input: {}", msg),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {}", msg),
            Error::OutOfDomain(msg) => write!(f, "out of domain: {}", msg),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
