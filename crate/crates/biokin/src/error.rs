use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A document or CSV file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A model or input violated a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two inputs disagree in length or shape.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument was out of its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A marker frame contained no usable observations.
    #[error("no visible markers")]
    NoVisibleMarkers,

    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A point sits at or behind the camera plane and cannot be projected.
    #[error("point {index} at or behind camera plane (z + t_z = {depth})")]
    BehindCamera { index: usize, depth: f64 },

    /// Per-frame failure inside a sequence operation.
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_frame(self, frame: usize) -> Error {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
