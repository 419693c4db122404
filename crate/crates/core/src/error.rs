use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("model violation: {0}")]
    Model(String),
    #[error("coincident points at indices {0} and {1}")]
    Coincident(usize, usize),
    #[error("conditioning failure for m={m} ({potential}): estimate {estimate:e}")]
    Conditioning { m: usize, potential: String, estimate: f64 },
    #[error("insufficient tail capture: {0}")]
    TailCapture(String),
    #[error("non-convergent truncation: {0}")]
    NonConvergent(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::Unsupported(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
