use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("PSD violation: value {value:e} is below the tolerance")]
    PsdViolation { value: f64 },

    #[error("matrix is singular: eigenvalue {eigenvalue:e} does not exceed floor {floor:e}")]
    Singular { eigenvalue: f64, floor: f64 },

    #[error("eigendecomposition did not converge within {iterations} iterations")]
    NumericalFailure { iterations: usize },

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{bound} is inapplicable: {reason} (threshold {threshold})")]
    Inapplicable {
        bound: &'static str,
        reason: String,
        threshold: f64,
    },

    #[error("constant {0} is unavailable for this design")]
    Unavailable(&'static str),

    #[error("unsupported bias: {0}")]
    UnsupportedBias(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Checks `value ∈ (lo, hi)`.
pub(crate) fn open_interval(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    domain: &'static str,
) -> Result<()> {
    if value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::Domain { name, value, domain })
    }
}

pub(crate) fn nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        })
    }
}

pub(crate) fn delta_unit(delta: f64) -> Result<()> {
    open_interval("delta", delta, 0.0, 1.0, "(0, 1)")
}
