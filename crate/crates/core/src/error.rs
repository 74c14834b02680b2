//! Crate-wide error type. Every fallible operation returns one of these
//! variants; the CLI maps them onto process exit codes.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unsupported field order {0}; supported orders are 2, 3, 5, 7")]
    UnsupportedFieldOrder(u64),
    #[error("input vectors are linearly dependent")]
    DependentInput,
    #[error("axis subset is empty")]
    EmptyAxis,
    #[error("axis subset is not contained in the tensor axis")]
    NotSubset,
    #[error("point is outside the tensor axes")]
    BadPoint,
    #[error("vector does not match the contracted axis")]
    AxisMismatch,
    #[error("coordinate set must be a nonempty proper subset of [d]")]
    BadAxisSet,
    #[error("family is already the all-singletons family")]
    AlreadyTensorRank,
    #[error("enumeration budget of {budget} nodes exceeded")]
    ScaleExceeded { budget: u64 },
    #[error("rank too low: requested {requested}, certified only {certified}")]
    RankTooLow { requested: usize, certified: usize },
    #[error("slice rank bound violated: hypothesis allows {bound}, found {found}")]
    SliceBoundViolated { bound: usize, found: usize },
    #[error("hypothesis could not be verified at this scale")]
    HypothesisUnverifiable,
    #[error("obstructed: {0}")]
    Obstructed(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("unknown budget name {0:?}")]
    UnknownBudget(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("unknown generator kind {0:?}")]
    UnknownKind(String),
    #[error("invalid tensor or family data: {0}")]
    InvalidData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
