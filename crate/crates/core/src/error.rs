use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdroError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical range error: {0}")]
    NumericalRange(String),

    #[error("instance too large for exhaustive oracle: {0}")]
    Capacity(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("second stage infeasible: capacity falls short of demand by {deficit}")]
    Infeasible { deficit: f64 },

    #[error("bracket [{low}, {high}] gives eta in [{eta_high}, {eta_low}], which does not contain target {target}")]
    Bracket {
        low: f64,
        high: f64,
        eta_low: f64,
        eta_high: f64,
        target: f64,
    },
}

pub type Result<T> = std::result::Result<T, RdroError>;

pub(crate) fn ensure_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(RdroError::Dimension(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}
