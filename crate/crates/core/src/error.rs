use thiserror::Error;

/// Failures raised by the simulation and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation cutoff {required} exceeds hard cap {cap} (alpha^2 = {alpha_sq})")]
    TruncationCap {
        alpha_sq: f64,
        required: usize,
        cap: usize,
    },

    #[error("inefficiency sum did not reach tail bound {tail_tol:e} within {cap} extra photons")]
    SummationCap { tail_tol: f64, cap: usize },

    #[error("all {restarts} optimizer restarts failed")]
    NoConvergence { restarts: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
