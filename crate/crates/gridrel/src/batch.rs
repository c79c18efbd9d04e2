//! Indexed batch evaluation, parallel when the `parallel` feature is on.
//!
//! Results are collected in index order and reduced sequentially by the
//! caller, so parallel and sequential execution produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(0), .., f(n-1)` and collect results in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Evaluate `f(0), .., f(n-1)` and collect results in index order.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    indexed_map_seq(n, f)
}

/// Sequential reference path; always available so benchmarks can compare
/// it against the parallel path in one build.
pub fn indexed_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(indexed_map(1000, f), indexed_map_seq(1000, f));
    }
}
