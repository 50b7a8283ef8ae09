//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model evaluation, measurement construction, integration
/// and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),

    /// The integrator produced a non-finite state; `time` is where it blew up.
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    /// Step-halving hit the minimum step. `field_norm` is the max-norm of the
    /// velocity at the failure point, the effective local gain driving the
    /// stiffness.
    #[error("minimum step underflow at t = {time} (field max-norm {field_norm:.3e})")]
    MinStepUnderflow { time: f64, field_norm: f64 },

    #[error("mode enumeration guard: d = {d} exceeds the limit {max}")]
    EnumerationGuard { d: usize, max: usize },

    #[error("no mixture mode is consistent with the measurement")]
    NoConsistentMode,

    #[error("duplicate measurement indices")]
    DuplicateIndices,

    #[error("measurement index {index} out of range for d = {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("measurement matrix is rank deficient")]
    RankDeficient,

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("insufficient trials: need at least {required}, got {got}")]
    InsufficientTrials { required: usize, got: usize },

    #[error("empty sample set")]
    EmptySamples,

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config constraint violated: {key} must satisfy {constraint}")]
    ConstraintViolation { key: String, constraint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
