use thiserror::Error;

/// Errors produced by the simulation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("configuration constraint violated: {0}")]
    Constraint(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("time shift {0} s is not on the sampling grid")]
    OffGrid(f64),

    #[error("waveform does not cover the frame span: {0}")]
    WaveformTooShort(String),

    #[error("path index out of range: {0}")]
    PathOutOfRange(String),

    #[error("too many paths requested: {requested} > {capacity}")]
    TooManyPaths { requested: usize, capacity: usize },

    #[error("maximum Doppler {nu_max:.3} Hz exceeds the configured grid limit {limit:.3} Hz")]
    DopplerTooLarge { nu_max: f64, limit: f64 },

    #[error("instance too large for exhaustive search: {0} hypotheses bits")]
    InstanceTooLarge(usize),

    #[error("iterative solver did not converge (relative residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("pulse design failed: {0}")]
    PulseDesign(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
