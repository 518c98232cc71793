use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

/// Shared handle for cooperative cancellation and progress reporting.
///
/// Clones observe the same state, so one copy can live in a job record while
/// the solver polls another between pivots and branch-and-bound nodes.
#[derive(Debug, Clone, Default)]
pub struct SolveControl {
    cancelled: Arc<AtomicBool>,
    iterations: Arc<AtomicU64>,
    nodes: Arc<AtomicU64>,
}

impl SolveControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::SeqCst)
    }

    /// Simplex iterations performed so far, summed over all solves sharing this handle.
    pub fn iterations(&self) -> u64 {
        self.iterations.load(Ordering::Relaxed)
    }

    /// Branch-and-bound nodes explored so far.
    pub fn nodes(&self) -> u64 {
        self.nodes.load(Ordering::Relaxed)
    }

    pub(crate) fn add_iterations(&self, n: u64) {
        self.iterations.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn add_node(&self) {
        self.nodes.fetch_add(1, Ordering::Relaxed);
    }
}
