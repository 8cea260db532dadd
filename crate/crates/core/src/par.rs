//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, work is spread over rayon's pool; without it (or with
//! [`Parallelism::Sequential`]) the same closures run in a plain loop. Results always come
//! back in index order, and chunk boundaries depend only on the item count, so reductions
//! are bit-identical either way.

/// Execution strategy for the batch loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// rayon when compiled with `parallel`, otherwise sequential.
    #[default]
    Auto,
    Sequential,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Auto
    }
}

/// Number of gradient-accumulation chunks per batch. Fixed so that results do not depend
/// on the thread count.
pub const GRAD_CHUNKS: usize = 8;

/// `f(0), f(1), …, f(n-1)` collected in order.
pub fn map_indexed<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Splits `0..n` into at most `chunks` contiguous ranges and folds each one with `f`,
/// starting from `init()`. Accumulators come back in range order.
pub fn fold_chunks<A, I, F>(n: usize, chunks: usize, mode: Parallelism, init: I, f: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
{
    let ranges = chunk_ranges(n, chunks);
    map_indexed(ranges.len(), mode, |c| {
        let mut acc = init();
        for i in ranges[c].clone() {
            f(&mut acc, i);
        }
        acc
    })
}

pub fn chunk_ranges(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let size = n.div_ceil(chunks.max(1));
    (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect()
}

/// Caps rayon's global pool at `TGMIXER_THREADS` when that variable is set.
/// Returns the cap that was applied.
pub fn init_threads_from_env() -> Option<usize> {
    let n: usize = std::env::var("TGMIXER_THREADS").ok()?.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything() {
        assert_eq!(chunk_ranges(10, 3), vec![0..4, 4..8, 8..10]);
        assert_eq!(chunk_ranges(2, 8), vec![0..1, 1..2]);
        assert!(chunk_ranges(0, 8).is_empty());
    }

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(1000, Parallelism::Auto, f);
        let b = map_indexed(1000, Parallelism::Sequential, f);
        assert_eq!(a, b);
        let fa = fold_chunks(1000, 8, Parallelism::Auto, || 0.0, |s, i| *s += f(i));
        let fb = fold_chunks(1000, 8, Parallelism::Sequential, || 0.0, |s, i| *s += f(i));
        assert_eq!(fa, fb);
    }
}
