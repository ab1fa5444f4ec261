//! Thin data-parallel layer.
//!
//! With the `parallel` feature these helpers dispatch to rayon; without it
//! they run sequentially. Reductions use a fixed chunking so the floating
//! point summation order, and therefore every result, is independent of the
//! thread count and of the feature flag.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
pub const REDUCE_CHUNK: usize = 4096;

/// `(0..len).map(f).collect()`, possibly in parallel. Output order is the index order.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Map over a slice, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fill `out[i] = f(i)`.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}

/// Deterministic sum of `f(i)` for `i in 0..len`.
///
/// Partial sums over fixed chunks are combined left to right.
pub fn sum_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(REDUCE_CHUNK);
    let partials = map_range(chunks, |c| {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(len);
        (start..end).map(&f).sum::<f64>()
    });
    partials.into_iter().sum()
}

/// Deterministic dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_range(a.len(), |i| a[i] * b[i])
}

/// Deterministic maximum of `f(i)`; returns 0 for an empty range.
pub fn max_range<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(REDUCE_CHUNK);
    map_range(chunks, |c| {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(len);
        (start..end).map(&f).fold(0.0_f64, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(feature = "parallel")]
    {
        y.par_iter_mut()
            .zip(x.par_iter())
            .for_each(|(yi, xi)| *yi += alpha * xi);
    }
    #[cfg(not(feature = "parallel"))]
    {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    }
}

/// `y = x + beta * y`.
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    #[cfg(feature = "parallel")]
    {
        y.par_iter_mut()
            .zip(x.par_iter())
            .for_each(|(yi, xi)| *yi = xi + beta * *yi);
    }
    #[cfg(not(feature = "parallel"))]
    {
        y.iter_mut()
            .zip(x)
            .for_each(|(yi, xi)| *yi = xi + beta * *yi);
    }
}

/// Run `f` on a pool with `workers` threads (parallel builds only).
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Some(k) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
            {
                return pool.install(f);
            }
            log::warn!("could not build a {k}-thread pool, using the global pool");
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
    fn sum_matches_sequential_chunking() {
        let v: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let expected: f64 = v.chunks(REDUCE_CHUNK).map(|c| c.iter().sum::<f64>()).sum();
        assert_eq!(sum_range(v.len(), |i| v[i]), expected);
        assert_eq!(sum_range(0, |_| 1.0), 0.0);
    }

    #[test]
    fn max_and_map() {
        assert_eq!(max_range(5, |i| i as f64), 4.0);
        assert_eq!(map_range(4, |i| i * 2), vec![0, 2, 4, 6]);
    }
}
