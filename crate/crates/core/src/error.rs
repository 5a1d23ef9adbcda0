use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation needs a backend the model does not provide.
    #[error("operation `{op}` requires the {required} backend")]
    UnsupportedBackend { op: &'static str, required: &'static str },

    /// Two fields or trajectories live on different models.
    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    /// Two objects that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The fBm covariance could not be factorised even by the dense fallback.
    #[error("covariance factorisation failed: {0}")]
    Factorization(String),

    /// Picard iteration did not reach its tolerance.
    #[error("picard iteration did not converge after {iterations} iterations (last gap {last_gap:e})")]
    NonConvergence { iterations: usize, last_gap: f64, gaps: Vec<f64> },

    /// The direct integrator exceeded its blow-up guard.
    #[error("numerical blow-up at t = {time}: norm {norm:e} exceeds guard {guard:e}")]
    BlowUp { time: f64, norm: f64, guard: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::UnsupportedBackend { .. } => "unsupported_backend",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Factorization(_) => "factorization",
            Error::NonConvergence { .. } => "non_convergence",
            Error::BlowUp { .. } => "blow_up",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
