//! Data-parallel map over draw indices.
//!
//! With the `parallel` feature the map runs on the rayon pool; without it
//! (or with [`Execution::Sequential`]) it is a plain loop. Results always
//! come back in index order, so any reduction done afterwards is
//! independent of scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(i)` for `i` in `0..len`, returning results in index order.
pub fn map_indices<T, F>(exec: Execution, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Fallible variant; the first error by index wins.
pub fn try_map_indices<T, E, F>(exec: Execution, len: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(exec, len, f).into_iter().collect()
}

/// Sum of `values`. `ordered = true` folds left to right and is
/// bit-reproducible; the unordered path uses a parallel tree reduction whose
/// rounding depends on the split points.
pub fn sum(values: &[f64], ordered: bool) -> f64 {
    #[cfg(feature = "parallel")]
    if !ordered {
        use rayon::prelude::*;
        return values.par_iter().sum();
    }
    let _ = ordered;
    values.iter().sum()
}

/// Upper bound on the number of partial accumulators in [`try_fold_blocks`].
pub const MAX_BLOCKS: usize = 32;

/// Folds `0..len` into an accumulator without materialising per-index
/// results.
///
/// The range is cut into at most [`MAX_BLOCKS`] contiguous blocks whose
/// boundaries depend only on `len`. Each block folds left to right, possibly
/// in parallel with the others, and the partials are merged in block order.
/// The rounding pattern is therefore the same for every thread count and
/// for both execution modes. The first error by index wins.
pub fn try_fold_blocks<A, E, I, F, M>(
    exec: Execution,
    len: usize,
    init: I,
    fold: F,
    merge: M,
) -> Result<A, E>
where
    A: Send,
    E: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> Result<A, E> + Sync + Send,
    M: Fn(A, A) -> A,
{
    let block = len.div_ceil(MAX_BLOCKS).max(1);
    let n_blocks = len.div_ceil(block);
    let partials = try_map_indices(exec, n_blocks, |b| {
        let mut acc = init();
        for i in b * block..((b + 1) * block).min(len) {
            acc = fold(acc, i)?;
        }
        Ok(acc)
    })?;
    Ok(partials.into_iter().reduce(merge).unwrap_or_else(init))
}
