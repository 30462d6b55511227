//! Data-parallel helpers.
//!
//! All batch-level loops in the crate funnel through [`map_indexed`] so the
//! `parallel` feature is the single switch between rayon and sequential
//! execution. [`map_indexed_seq`] is always available and is what the
//! benches use as the comparison baseline.

/// Sequential reference implementation: `f(0), f(1), ..., f(n-1)`.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Apply `f` to every index in `0..n`, in parallel when the `parallel`
/// feature is enabled. Output order matches index order either way.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    map_indexed_seq(n, f)
}
