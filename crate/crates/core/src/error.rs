use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("cannot pool over an empty axis")]
    EmptyAxis,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("point set is empty")]
    EmptyPointSet,
    #[error("non-finite coordinate at point {0}")]
    NonFiniteCoordinate(usize),
    #[error("requested {requested} samples from {available} points")]
    SampleCount { requested: usize, available: usize },
    #[error("radius must be positive, got {0}")]
    Radius(f64),
    #[error("neighbor count must be at least 1")]
    ZeroNeighbors,
    #[error("index {index} out of range for {len} entries")]
    Index { index: usize, len: usize },

    #[error("invalid video: {0}")]
    Video(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },
    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingData { expected: usize, found: usize },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("config digest mismatch between checkpoint and requested model")]
    DigestMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFiniteGradient(_) | Error::NonFinite(_) => ErrorKind::Numeric,
            Error::BadMagic { .. }
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::TrailingData { .. }
            | Error::Malformed(_)
            | Error::Io(_)
            | Error::Video(_)
            | Error::EmptyPointSet
            | Error::NonFiniteCoordinate(_) => ErrorKind::Data,
            _ => ErrorKind::Config,
        }
    }
}
