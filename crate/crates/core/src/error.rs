use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A checkable modelling assumption does not hold.
    #[error("{assumption} violated: {detail}")]
    AssumptionViolated {
        assumption: &'static str,
        detail: String,
    },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numerical blow-up at step {step}")]
    Blowup { step: u64 },

    /// Newton projection onto the soliton manifold failed or left the
    /// tubular neighbourhood. Carries the last orthogonality residuals.
    #[error("tracking lost at t = {t}: {reason} (residuals {residuals:?})")]
    TrackingLost {
        t: f64,
        reason: String,
        residuals: Vec<f64>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
