//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures in order. Reductions are always combined in a fixed
//! chunk order so results do not depend on the worker count.

/// Chunk length used by deterministic reductions.
const REDUCE_CHUNK: usize = 4096;

/// Apply `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Apply `f(index, item)` to every element.
pub fn for_each_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// Collect `f(i)` for `i in 0..n` in index order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sum of `f(i)` over `0..n`, combined in a fixed order.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_collect(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Maximum of `f(i)` over `0..n` with the smallest attaining index.
/// Returns `(f64::NEG_INFINITY, usize::MAX)` when nothing is visited.
pub fn argmax<F>(n: usize, f: F) -> (f64, usize)
where
    F: Fn(usize) -> Option<f64> + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partial = map_collect(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(n);
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in lo..hi {
            if let Some(v) = f(i) {
                if v > best.0 {
                    best = (v, i);
                }
            }
        }
        best
    });
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for p in partial {
        if p.0 > best.0 {
            best = p;
        }
    }
    best
}

/// Run `f` with at most `workers` threads (no-op without `parallel`).
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: Option<usize>, f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(w) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_order_stable() {
        let a = sum(100_003, |i| 1.0 / (1.0 + i as f64));
        let b = with_workers(Some(1), || sum(100_003, |i| 1.0 / (1.0 + i as f64)));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn argmax_prefers_first_index() {
        let (v, i) = argmax(10_000, |i| Some(if i % 5000 == 7 { 3.0 } else { 1.0 }));
        assert_eq!(v, 3.0);
        assert_eq!(i, 7);
    }
}
