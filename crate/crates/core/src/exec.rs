//! Draw-parallel execution with results that do not depend on the worker count.
//!
//! Work is cut into fixed-size chunks of draw indices. Chunk boundaries
//! depend only on the total and the chunk size, and partial results come
//! back in chunk order, so any reduction over them is reproducible.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Draws per chunk unless a caller asks otherwise.
pub const DEFAULT_CHUNK: u64 = 256;

pub struct Executor {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidParameter(
                "worker count must be at least 1".into(),
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(Self { pool, workers })
    }

    pub fn sequential() -> Self {
        Self::new(1).expect("single worker pool")
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `f` over consecutive chunks of `0..total`, returning the
    /// per-chunk results in chunk order.
    pub fn map_chunks<T, F>(&self, total: u64, chunk: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<u64>) -> T + Sync,
    {
        let chunk = chunk.max(1);
        let chunks = total.div_ceil(chunk);
        let run = |c: u64| f(c * chunk..((c + 1) * chunk).min(total));
        if self.workers == 1 {
            return (0..chunks).map(run).collect();
        }
        self.pool
            .install(|| (0..chunks).into_par_iter().map(run).collect())
    }

    /// `map_chunks` followed by an in-order fold.
    pub fn fold_chunks<T, F, M>(&self, total: u64, chunk: u64, f: F, init: T, mut merge: M) -> T
    where
        T: Send,
        F: Fn(Range<u64>) -> T + Sync,
        M: FnMut(&mut T, T),
    {
        let mut acc = init;
        for part in self.map_chunks(total, chunk, f) {
            merge(&mut acc, part);
        }
        acc
    }
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .finish()
    }
}
