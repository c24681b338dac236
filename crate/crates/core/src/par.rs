//! Data-parallel helpers.
//!
//! Every batch loop in the crate goes through [`map_range`] so the same code
//! path runs on rayon (feature `parallel`, on by default) or sequentially.
//! Results are always collected in index order, so output never depends on
//! the strategy or thread count.

/// How a batch loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    Sequential,
    /// Rayon work-stealing; falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

impl Strategy {
    /// True when this build can actually run [`Strategy::Parallel`] on a pool.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Map `f` over `0..n`, preserving order.
pub fn map_range<T, F>(strategy: Strategy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match strategy {
        Strategy::Sequential => (0..n).map(f).collect(),
        Strategy::Parallel => parallel_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
