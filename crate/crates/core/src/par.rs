//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it they run the same closures sequentially. Every helper writes
//! disjoint outputs or returns per-item results in index order, so results are
//! identical regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(index, chunk)` for each `chunk`-sized piece of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Evaluates `f` over `0..n` and collects in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps every item of a slice, preserving order.
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

pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

/// Maximum of `f` over chunks, folded in chunk order.
pub fn max_over_chunks<T, F>(data: &[T], chunk: usize, f: F) -> f64
where
    T: Sync,
    F: Fn(&[T]) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = data.par_chunks(chunk).map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = data.chunks(chunk).map(f).collect();
    parts.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum and maximum of a slice.
pub fn min_max(data: &[f64], chunk: usize) -> (f64, f64) {
    let local = |c: &[f64]| {
        c.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, f64)> = data.par_chunks(chunk.max(1)).map(local).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, f64)> = data.chunks(chunk.max(1)).map(local).collect();
    parts
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}
