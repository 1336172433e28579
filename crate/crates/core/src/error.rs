use alloc::string::String;

/// Errors raised by the model, simulator and tuners.
///
/// Numerical blow-up of a simulation is *not* an error: it is reported on
/// the trace itself so that a tuner can price it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hyperparameter fit failed: {0}")]
    HyperparameterFit(String),

    #[error("objective evaluation failed: {0}")]
    Oracle(String),

    #[error("tuning rule failed: {0}")]
    Tuning(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Returns an error unless `value` is finite and strictly positive.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> crate::Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, alloc::format!("must be finite and > 0, got {value}")))
    }
}

/// Returns an error unless `value` is finite and non-negative.
pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> crate::Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, alloc::format!("must be finite and >= 0, got {value}")))
    }
}
