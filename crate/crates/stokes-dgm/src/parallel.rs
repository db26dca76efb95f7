//! Data-parallel execution helpers with a sequential fallback.
//!
//! Batch work (point losses, gradient accumulation, grid fills) is
//! embarrassingly parallel. With the `parallel` feature enabled, `Auto`
//! dispatches to the rayon pool; without it every helper runs on the
//! current thread. Reductions always merge fixed-width chunks in index
//! order, so results are bit-identical across thread counts and between
//! the parallel and sequential paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk width for reductions. Chunk boundaries depend only on the
/// job count, never on the thread count.
const CHUNK: usize = 16;

/// How batch loops execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// Rayon pool when the `parallel` feature is on, current thread otherwise.
    Auto,
    /// Always the current thread.
    Sequential,
}

impl Default for ExecMode {
    fn default() -> Self {
        ExecMode::Auto
    }
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn indexed_map<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Auto => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Fold `0..n` into per-chunk accumulators and merge them in index order.
///
/// Returns `None` when `n == 0`.
pub fn chunk_reduce<A, Mk, Fold, Merge>(
    mode: ExecMode,
    n: usize,
    make: Mk,
    fold: Fold,
    merge: Merge,
) -> Option<A>
where
    A: Send,
    Mk: Fn() -> A + Send + Sync,
    Fold: Fn(&mut A, usize) + Send + Sync,
    Merge: Fn(&mut A, A),
{
    if n == 0 {
        return None;
    }
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let run = |&start: &usize| {
        let mut acc = make();
        for i in start..(start + CHUNK).min(n) {
            fold(&mut acc, i);
        }
        acc
    };
    let per_chunk: Vec<A> = match mode {
        ExecMode::Sequential => starts.iter().map(run).collect(),
        ExecMode::Auto => {
            #[cfg(feature = "parallel")]
            {
                starts.par_iter().map(run).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                starts.iter().map(run).collect()
            }
        }
    };
    per_chunk.into_iter().reduce(|mut left, right| {
        merge(&mut left, right);
        left
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexed_map_preserves_order() {
        let v = indexed_map(ExecMode::Auto, 100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn chunk_reduce_matches_sequential_sum_bitwise() {
        let vals: Vec<f64> = (0..537).map(|i| (i as f64 * 0.371).sin()).collect();
        let sum = |mode| {
            chunk_reduce(
                mode,
                vals.len(),
                || 0.0f64,
                |acc, i| *acc += vals[i],
                |l, r| *l += r,
            )
            .unwrap()
        };
        let par = sum(ExecMode::Auto);
        let seq = sum(ExecMode::Sequential);
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn chunk_reduce_empty_is_none() {
        let r = chunk_reduce(ExecMode::Auto, 0, || 0.0f64, |_, _| {}, |_, _| {});
        assert!(r.is_none());
    }
}
