//! Exact computations on tensors over small prime fields: rank notions defined
//! by partition families (tensor, slice, partition rank and their relatives),
//! covering-number certificates, bias and analytic rank, constructive minor
//! extraction, and disjoint-support machinery.
//!
//! Everything here is exact arithmetic over F_p for p in {2, 3, 5, 7}; there is
//! no floating point on any certified path. Searches are exhaustive at desk
//! scale and guarded by an explicit node budget, so every reported value is
//! either certified (with a re-checkable certificate) or the call fails with
//! `ScaleExceeded`.

pub mod algebra;
pub mod bias;
pub mod cover;
pub mod disjoint;
pub mod error;
pub mod gen;
pub mod minors;
pub mod oracle;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub use par::Parallelism;
