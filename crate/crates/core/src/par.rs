//! Execution-strategy switch for the data-parallel kernels.
//!
//! Hot loops (the counterexample minor scan, exact bias enumeration) take a
//! `Parallelism` argument and run either on a rayon pool or as a plain
//! sequential loop. Both paths reduce deterministically, so results are
//! byte-identical; the benches compare their throughput.

/// Which execution strategy a kernel should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Parallelism {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Parallelism::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Parallelism::Sequential
    }
}
