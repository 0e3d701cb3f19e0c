//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by game construction, evaluation and solving.
#[derive(Debug, Error)]
pub enum Error {
    /// An index (player, state, action, timestep) is outside its range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Two objects that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A documented capacity limit was exceeded (e.g. joint-action budget).
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    /// A structural precondition does not hold (e.g. continuation values
    /// that fail to sum to zero, or an operation that needs switching
    /// control applied to a two-controller state).
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A file could not be parsed; `path` locates the offending field.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    /// A certificate operation was handed an infeasible point.
    #[error("infeasible point: {0}")]
    Infeasible(String),

    /// A counterexample verification assertion failed; the message names
    /// the failing quantity.
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
