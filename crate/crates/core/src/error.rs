use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{what} is not unitary (|S†S - I| = {deviation:.3e})")]
    NotUnitary { what: &'static str, deviation: f64 },

    #[error("{what} is not Hermitian (|A - A†| = {deviation:.3e})")]
    NotHermitian { what: &'static str, deviation: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index ({j}, {k}) out of range for {n} components")]
    IndexOutOfRange { j: usize, k: usize, n: usize },

    #[error("overlap underflow for pair ({j}, {k}): |g_jk| = {magnitude:.3e}")]
    OverlapUnderflow { j: usize, k: usize, magnitude: f64 },

    #[error("quadrature did not converge (residual estimate {residual:.3e})")]
    Quadrature { residual: f64 },

    #[error("expected {expected} hierarchy blocks per side, found {found}")]
    BlockCount { expected: usize, found: usize },

    #[error("weight matrix violates normalization: {0}")]
    Normalization(String),

    #[error("conditional normalization collapse (denominator {0:.3e})")]
    NormalizationCollapse(f64),

    #[error("inconsistent record: count registered at intensity {intensity:.3e} below floor {floor:.3e}")]
    InconsistentRecord { intensity: f64, floor: f64 },

    #[error("jump probability {probability:.3e} exceeds 0.1 (intensity {intensity:.3e}); use a smaller dt")]
    JumpProbability { probability: f64, intensity: f64 },

    #[error("step {step} (t = {t:.6}) failed: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
