use crate::units::Dimension;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: Dimension, found: Dimension },
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("momentum {beta:.3e}·m is relativistic")]
    Relativistic { beta: f64 },
    #[error("quadrature did not converge: estimate {value_real:.6e} + {value_imag:.6e}i, error {error:.3e} (tolerance {tolerance:.3e})")]
    NonConvergent { value_real: f64, value_imag: f64, error: f64, tolerance: f64 },
    #[error("|gamma| = {0} exceeds 1")]
    GammaOutOfRange(f64),
    #[error("boost denominator vanishes (|Δx| too small or aligned with q)")]
    VanishingDenominator,
    #[error("unknown catalog entry {0:?}")]
    UnknownExperiment(String),
    #[error("unknown material {0:?}")]
    UnknownMaterial(String),
    #[error("data file: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
