//! Ordered data-parallel map helpers.
//!
//! `par_map` runs on the rayon pool when the `parallel` feature is enabled
//! and degrades to the sequential path otherwise. Output order always equals
//! input order, so callers stay deterministic under any thread count.
//! `seq_map` is always available; the benches use it to compare both paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over `items`, preserving order. Parallel when the `parallel` feature
/// is enabled, sequential otherwise.
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map with the same signature as [`par_map`].
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Map over `items` choosing the path at runtime; `sequential = true` forces
/// the single-threaded path even when the feature is compiled in.
pub fn maybe_par_map<T, U, F>(items: Vec<T>, sequential: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    if sequential {
        seq_map(items, f)
    } else {
        par_map(items, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = par_map(xs.clone(), |x| x * 3);
        let b = seq_map(xs, |x| x * 3);
        assert_eq!(a, b);
    }
}
