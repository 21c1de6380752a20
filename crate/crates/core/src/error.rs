use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mass {mass} is not below the critical mass 8*pi = {}", 8.0 * std::f64::consts::PI)]
    SupercriticalMass { mass: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("negative density {value:e} in cell {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e}); trace tail {trace:?}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("time step {dt:e} exceeds the drift CFL bound {dt_cfl:e}")]
    CflViolation { dt: f64, dt_cfl: f64 },

    #[error("scheme failure at tau = {tau}: {reason}")]
    SchemeFailure { tau: f64, reason: String },

    #[error("trap has no root at M = {mass}, p = {p}: H(z0) = {h_at_z0:e} <= 0")]
    TrapFailed { mass: f64, p: f64, h_at_z0: f64 },

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::SupercriticalMass { .. }
                | Error::GridMismatch(_)
                | Error::CflViolation { .. }
                | Error::Parse(_)
        )
    }
}
