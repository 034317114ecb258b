//! Error type shared across the crate.

use std::path::PathBuf;

/// Coarse classification used by callers that map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: files, flags, vectors of the wrong shape, non-finite samples.
    Input,
    /// A broken internal invariant; always a bug, never the user's fault.
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input value is not finite")]
    NonFiniteInput,

    #[error("value {value} cannot be quantized at base {base}, {digits} digits without overflow")]
    QuantizeOverflow { value: f64, base: u32, digits: u32 },

    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroNormRow { row: usize },

    #[error("vector length {got} does not match expected length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("matrix rows must all have the same length: row {row} has {got} entries, expected {expected}")]
    RaggedMatrix { row: usize, expected: usize, got: usize },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("vector {vector:?} is not unit-norm (|norm - 1| = {deviation:.3e} exceeds {tolerance:.1e})")]
    NormViolation {
        vector: Vec<f64>,
        deviation: f64,
        tolerance: f64,
    },

    #[error("correlation vector is empty")]
    EmptyCorrelations,

    #[error("window is not full yet ({have} of {need} samples)")]
    WindowNotFull { have: usize, need: usize },

    #[error("placements at offsets {first} and {second} overlap (window length {window})")]
    OverlappingPlacements {
        first: usize,
        second: usize,
        window: usize,
    },

    #[error("placement at offset {offset} does not fit in a signal of length {length} (window length {window})")]
    PlacementOutOfRange {
        offset: usize,
        window: usize,
        length: usize,
    },

    #[error("template index {template} out of range for {count} templates")]
    TemplateOutOfRange { template: usize, count: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Internal(_) => ErrorKind::Internal,
            _ => ErrorKind::Input,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
