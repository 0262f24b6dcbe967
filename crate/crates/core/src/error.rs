use thiserror::Error;

/// Errors raised by model evaluation, integration, shooting and continuation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("phase index {index} out of range for a system with {phases} phases")]
    PhaseIndex { index: usize, phases: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no event in phase {phase} before t = {t_max}")]
    NoEvent { phase: usize, t_max: f64 },

    #[error("grazing crossing in phase {phase}: event rate {rate:e} is not transversal")]
    Grazing { phase: usize, rate: f64 },

    #[error("integration tolerance failure at t = {t}: {reason}")]
    ToleranceFailure { t: f64, reason: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("corrector did not converge: {0}")]
    CorrectorFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: what.to_string(),
            expected,
            got,
        })
    }
}
