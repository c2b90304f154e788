//! Pluggable execution of independent jobs.
//!
//! The core has no threads of its own. Callers that want parallel batch
//! simulation or per-frequency spectral work pass an implementation of
//! [`Parallelism`]; results are always returned in job order, so output does
//! not depend on execution order.

use alloc::vec::Vec;

pub trait Parallelism: Sync {
    /// Evaluates `job(i)` for `i in 0..n` and returns the results in index order.
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Parallelism for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(job).collect()
    }
}
