use thiserror::Error;

/// Errors raised across the laboratory.
///
/// The variants map onto the CLI exit codes: `Config` and `Contract` are
/// caller mistakes (exit 2), everything else is a numerical failure (exit 3).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {message} (off-diagonal norm {off_norm:e})")]
    Numerical { message: String, off_norm: f64 },

    #[error("no convergence after {iterations} iterations: gap {gap:e} > tolerance {tolerance:e}")]
    Convergence {
        iterations: usize,
        gap: f64,
        tolerance: f64,
    },

    #[error("chain diagnostic: {0}")]
    Diagnostic(String),

    #[error("quadrature accuracy: error estimate {estimate:e} exceeds 1% of Z = {value:e}; increase the resolution")]
    Accuracy { estimate: f64, value: f64 },

    #[error("event probability {probability:e} is below the quadrature error floor {floor:e}")]
    Precision { probability: f64, floor: f64 },
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            off_norm: f64::NAN,
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Contract(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
