use thiserror::Error;

/// Errors raised by the library. Non-convergence is never an error; it is a
/// flag on the corresponding result type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("latent prior is not positive semi-definite: cov^2 = {cov_sq} exceeds var_x*var_y = {var_prod}")]
    NotPsd { cov_sq: f64, var_prod: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("improper posterior: effective precision {0} is not positive")]
    ImproperPosterior(f64),

    #[error("singular tilted covariance (denominator {0})")]
    SingularTiltedCovariance(f64),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no bracket in range [{lo}, {hi}]: {reason}")]
    NoBracket { lo: f64, hi: f64, reason: String },

    #[error("no spinodal: the transition is continuous on [{lo}, {hi}]")]
    NoSpinodal { lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
