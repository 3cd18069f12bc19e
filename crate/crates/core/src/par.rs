//! Order-preserving map abstraction.
//!
//! Heavy loops in this crate are written as `map_collect` over an index range.
//! Results always come back in index order and are reduced sequentially by the
//! caller, so the numbers do not depend on how many workers ran the map.

use alloc::vec::Vec;

pub trait Parallel: Sync {
    fn map_collect<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Parallel for Sequential {
    fn map_collect<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
