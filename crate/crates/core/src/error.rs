use thiserror::Error;

use crate::grid::MediumViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alpha must lie strictly in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("outer box margin {available} is smaller than the required {required}")]
    MarginTooSmall { required: f64, available: f64 },
    #[error("observation set is empty")]
    EmptyObservation,
    #[error("medium violates {} constraint(s); first: {}", .0.len(), .0[0])]
    InvalidMedium(Vec<MediumViolation>),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("non-finite value detected at step {step}")]
    NonFinite { step: usize },
    #[error("CFL number {cfl} exceeds the stability limit {limit}")]
    CflViolated { cfl: f64, limit: f64 },
    #[error("time reversal needs observations on the whole boundary")]
    PartialData,
    #[error("boundary trace has {found} samples, {needed} required")]
    TraceTooShort { needed: usize, found: usize },
    #[error("level function has a degenerate gradient near ({x:.4}, {y:.4})")]
    DegenerateGradient { x: f64, y: f64 },
    #[error("curve left the audited region near ({x:.4}, {y:.4})")]
    CurveExit { x: f64, y: f64 },
    #[error("curve length cap {cap} exceeded")]
    LengthCapExceeded { cap: f64 },
    #[error("leaf {level} could not be sampled: {reason}")]
    LeafNotFound { level: f64, reason: String },
    #[error("{count} node(s) of the source set cannot reach the reference leaf")]
    Unreachable { count: usize },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}

impl Error {
    /// Errors caused by the inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::AlphaOutOfRange(_)
                | Error::NonPositive { .. }
                | Error::LengthMismatch { .. }
                | Error::MarginTooSmall { .. }
                | Error::EmptyObservation
                | Error::InvalidMedium(_)
                | Error::InvalidSource(_)
                | Error::CflViolated { .. }
                | Error::PartialData
                | Error::TraceTooShort { .. }
                | Error::Unsupported(_)
                | Error::Format(_)
                | Error::Config { .. }
        )
    }
}
