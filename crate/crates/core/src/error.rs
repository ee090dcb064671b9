//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("qubit index out of range: {index} on {num_qubits} qubits")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("matrix is not unitary within tolerance (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },
    #[error("state norm deviates from 1 by {deviation:.3e}")]
    NotNormalized { deviation: f64 },
    #[error("register of {requested} qubits exceeds the hard cap of {cap}")]
    QubitCapExceeded { requested: usize, cap: usize },
    #[error("probability table invalid: {0}")]
    InvalidDistribution(String),
    #[error("prefix {prefix} carries zero mass; conditional is undefined")]
    UndefinedSupport { prefix: String },
    #[error("requested noise epsilon {requested} exceeds the attainable maximum {attainable}")]
    InfeasibleNoise { requested: f64, attainable: f64 },
    #[error("degenerate oracle query: both branch masses are zero at {context}")]
    DegenerateQuery { context: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
