//! Error taxonomy shared across the crate.
//!
//! Variants are grouped by the stage that raises them so the command-line
//! front end can map them onto distinct exit codes: configuration problems,
//! numerical failures during time stepping, and admissibility (assumption)
//! failures detected before a run starts.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum PhonoxError {
    /// Malformed or inconsistent configuration input.
    #[error("configuration error: {0}")]
    Config(String),

    /// Material tables violate a structural requirement.
    #[error("material model error: {0}")]
    Material(String),

    /// Interface coefficients outside their admissible ranges.
    #[error("inadmissible interface coefficients at frequency node {node}: {reason}")]
    Interface { node: usize, reason: String },

    /// Non-finite values produced while time stepping.
    #[error("numerical blow-up at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// A recorded trace does not cover the requested measurement window.
    #[error("trace coverage error: {0}")]
    Coverage(String),

    /// The extrapolation fit could not be performed.
    #[error("extrapolation error: {0}")]
    Extrapolation(String),

    /// A run precondition (domain width, probe support, resolution) fails.
    #[error("assumption audit failure: {0}")]
    Audit(String),

    /// Underlying I/O failure when reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON in a configuration or record file.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PhonoxError {
    /// Process exit code the front end should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PhonoxError::Config(_)
            | PhonoxError::Material(_)
            | PhonoxError::Interface { .. }
            | PhonoxError::Io(_)
            | PhonoxError::Json(_) => 2,
            PhonoxError::Numerical { .. }
            | PhonoxError::Coverage(_)
            | PhonoxError::Extrapolation(_) => 3,
            PhonoxError::Audit(_) => 4,
        }
    }
}
