//! Replicate-level data parallelism.
//!
//! Monte Carlo loops, multi-chain runs and per-state transition rows are
//! embarrassingly parallel. [`Execution`] picks between a rayon pool and a
//! plain loop at run time; without the `parallel` feature the parallel mode
//! falls back to the loop. Results are always returned in index order and
//! every replicate draws from its own substream, so output does not depend
//! on the mode or the thread count.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `f(i)` for `i in 0..count`, collected in order.
    pub fn map<T, F>(self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..count).into_par_iter().map(f).collect();
        }
        (0..count).map(f).collect()
    }

    /// `f(i, stream_i)` where `stream_i = root.substream(i)`.
    pub fn map_seeded<T, F>(self, root: &RngStream, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut RngStream) -> T + Sync + Send,
    {
        self.map(count, |i| {
            let mut rng = root.substream(i as u64);
            f(i, &mut rng)
        })
    }

    /// Folds `f(i)` into accumulators and merges them. `merge` must be
    /// associative and commutative for the result to be mode independent.
    pub fn fold<A, F, M>(self, count: usize, init: impl Fn() -> A + Sync + Send, f: F, merge: M) -> A
    where
        A: Send,
        F: Fn(&mut A, usize) + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..count)
                .into_par_iter()
                .fold(&init, |mut acc, i| {
                    f(&mut acc, i);
                    acc
                })
                .reduce(&init, &merge);
        }
        let _ = &merge;
        let mut acc = init();
        for i in 0..count {
            f(&mut acc, i);
        }
        acc
    }
}
