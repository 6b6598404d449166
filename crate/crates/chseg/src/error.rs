//! Crate-wide error type.
//!
//! Every failure mode carries enough context to diagnose the offending input;
//! the CLI maps `NonFiniteState` to exit code 3 and everything else to 2.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected NIfTI-1 \"n+1\\0\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported datatype: {0}")]
    UnsupportedDatatype(String),

    #[error("truncated data: need {expected} bytes, file has {actual}")]
    TruncatedData { expected: usize, actual: usize },

    #[error("non-positive pixdim on axis {axis}: {value}")]
    NonPositivePixdim { axis: usize, value: f32 },

    #[error("unsupported dimensionality: {0}")]
    UnsupportedDimensionality(String),

    #[error("missing field \"{0}\" in sidecar")]
    MissingField(String),

    #[error("dims mismatch: dims imply {expected} bytes, payload has {actual}")]
    DimsMismatch { expected: usize, actual: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("degenerate intensity: normalization divisor b = {b} is not positive")]
    DegenerateIntensity { b: f32 },

    #[error("non-finite state at step {step}: time step too large or invalid input")]
    NonFiniteState { step: usize },

    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),

    #[error("intensity-domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI reports for this error: 3 for numerical
    /// failure inside the solver, 2 for any input/config problem.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::NonFiniteState { .. } => 3,
            _ => 2,
        }
    }
}
