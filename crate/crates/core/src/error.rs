use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VortexError {
    #[error("vortices {i} and {j} collide (chord distance {distance:e})")]
    Collision { i: usize, j: usize, distance: f64 },

    #[error("matrix is not a proper rotation (orthogonality defect {defect:e}, det {det})")]
    InvalidRotation { defect: f64, det: f64 },

    #[error("vorticity {index} is {value}; {reason}")]
    InvalidVorticity {
        index: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mass matrix is not symmetric positive definite: {0}")]
    IndefiniteMass(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = VortexError> = std::result::Result<T, E>;
