//! Error types shared across the workspace.

use thiserror::Error;

/// Violation of a domain-type invariant or of the matching contract.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("malformed precondition on {attribute}: {reason}")]
    MalformedPrecondition { attribute: String, reason: String },
    #[error("payload contains forbidden identifier field {0:?}")]
    ForbiddenField(String),
}

impl ModelError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ModelError::InvalidField { field, reason: reason.into() }
    }
}

/// Failure to parse or validate canonical JSON bytes.
#[derive(Debug, Error)]
pub enum WireError {
    #[error("schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ModelError),
}
