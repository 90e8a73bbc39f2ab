use thiserror::Error;

/// Errors raised by model evaluation, controller assembly and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} is singular at q = {q:?}")]
    Singular { what: &'static str, q: Vec<f64> },

    #[error("{what} is not positive definite at q = {q:?}")]
    NotPositiveDefinite { what: &'static str, q: Vec<f64> },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("direction vector is zero (norm below {threshold:e})")]
    ZeroDirection { threshold: f64 },

    #[error("design invariant violated: {0}")]
    DesignInvariant(String),

    #[error("simulation diverged at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
