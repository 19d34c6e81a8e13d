use std::fmt;

use thiserror::Error;

/// A rejected configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error("{0}")]
    InvalidParam(ParamError),

    /// The heralding clicks have zero probability under the truncated pattern support.
    #[error("click pattern {clicks} has vanishing evidence ({evidence:e}) under the truncation")]
    DegenerateEvidence { clicks: String, evidence: f64 },

    #[error("oracle occupation space of {terms} terms exceeds the cap of {cap}")]
    OracleTooLarge { terms: usize, cap: usize },

    #[error("mode index {0} out of range")]
    NoSuchMode(usize),
}

impl RelayError {
    pub fn is_validation(&self) -> bool {
        matches!(self, RelayError::InvalidParam(_))
    }
}
