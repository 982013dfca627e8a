//! Independent work items and the executors that run them.
//!
//! An ensemble is split into a fixed number of items, each fully determined
//! by its index (it seeds its own random streams). Executors may run items in
//! any order or in parallel, but must return results in index order; callers
//! then reduce sequentially, so output does not depend on scheduling.

use alloc::vec::Vec;

use crate::error::Result;

pub trait Ensemble: Sync {
    type Item: Send;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, index: usize) -> Result<Self::Item>;
}

pub trait Executor: Sync {
    /// Runs every item and returns the results in index order. The first
    /// error (lowest index) wins.
    fn run_all<E: Ensemble>(&self, ensemble: &E) -> Result<Vec<E::Item>>;
}

/// Runs items one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Executor for Serial {
    fn run_all<E: Ensemble>(&self, ensemble: &E) -> Result<Vec<E::Item>> {
        (0..ensemble.len()).map(|i| ensemble.run(i)).collect()
    }
}

/// Adapts a closure over item indices into an [`Ensemble`].
pub struct FnEnsemble<F> {
    len: usize,
    f: F,
}

impl<F, T> FnEnsemble<F>
where
    F: Fn(usize) -> Result<T> + Sync,
    T: Send,
{
    pub fn new(len: usize, f: F) -> Self {
        FnEnsemble { len, f }
    }
}

impl<F, T> Ensemble for FnEnsemble<F>
where
    F: Fn(usize) -> Result<T> + Sync,
    T: Send,
{
    type Item = T;

    fn len(&self) -> usize {
        self.len
    }

    fn run(&self, index: usize) -> Result<T> {
        (self.f)(index)
    }
}

/// Splits `total` samples into blocks of at most `per_block`; returns the
/// per-block counts.
pub fn block_sizes(total: usize, per_block: usize) -> Vec<usize> {
    let per_block = per_block.max(1);
    let n = total.div_ceil(per_block);
    (0..n)
        .map(|b| per_block.min(total - b * per_block))
        .collect()
}
