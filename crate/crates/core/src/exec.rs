//! Execution policy for the data-parallel loops (channel transforms, Monte
//! Carlo trials, parameter sweeps).
//!
//! With the `parallel` feature the policy is a process-wide switch so the
//! same binary can be benchmarked both ways. Without the feature every loop
//! runs sequentially. Results never depend on the policy: work items are
//! independent and collected in index order.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

static POLICY: AtomicU8 = AtomicU8::new(1);

pub fn set_execution(policy: Execution) {
    POLICY.store(policy as u8, Ordering::Relaxed);
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && POLICY.load(Ordering::Relaxed) == 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// `(0..n).map(f).collect()`, in parallel when enabled and `work` (a rough
/// element count) is large enough to pay for the fork.
pub fn map_indexed<T, F>(n: usize, work: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if n > 1 && work >= PAR_MIN_WORK && execution() == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = work;
    (0..n).map(f).collect()
}

/// Below this many scalar samples the fork/join overhead dominates.
pub const PAR_MIN_WORK: usize = 2048;

/// Forces a parallel map regardless of the work estimate (coarse-grained jobs).
pub fn map_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed(n, usize::MAX, f)
}
