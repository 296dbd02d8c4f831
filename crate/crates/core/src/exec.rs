//! Data-parallel helpers.
//!
//! The heavy inner loops (per-frame pitch analysis, per-sample resampling,
//! per-voice rendering) are independent per index. They go through
//! [`map_indexed`], which uses rayon when the `parallel` feature is enabled
//! and a plain iterator otherwise. Results are always collected in index
//! order, so the output is identical under both strategies.

/// How to run an index-parallel loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Evaluates `f(0..n)` and collects the results in order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`], with per-worker scratch state created by `init`.
pub fn map_indexed_with<S, T, I, F>(exec: Execution, n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect()
        }
        _ => {
            let mut scratch = init();
            (0..n).map(|i| f(&mut scratch, i)).collect()
        }
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<A, T, F>(exec: Execution, items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}
