//! Data-parallel execution with a sequential fallback.
//!
//! Independent work items (training seeds, property-test instances,
//! Monte-Carlo chunks) go through [`map`], which dispatches to rayon when the
//! `parallel` feature is enabled and to a plain loop otherwise. Both variants
//! preserve input order, so results are deterministic either way.

/// Map `f` over `items` sequentially.
pub fn map_sequential<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    items.into_iter().map(f).collect()
}

/// Map `f` over `items` on the rayon thread pool, preserving order.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Map `f` over independent work items, in parallel when available.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    map_parallel(items, f)
}

/// Map `f` over independent work items, in parallel when available.
#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    map_sequential(items, f)
}
