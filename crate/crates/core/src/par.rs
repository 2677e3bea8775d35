//! Data-parallel helpers with a sequential fallback.
//!
//! Built with the `parallel` feature (the default) these fan out over rayon;
//! without it they run a plain loop. Both paths produce identical results:
//! work items depend only on their index, and outputs are collected in index
//! order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Fallible version of [`map_indexed`]; the lowest-index error wins so the
/// reported failure does not depend on scheduling.
pub fn try_map_indexed<T, F>(n: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> crate::Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let mut out: Vec<(usize, crate::Result<T>)> =
            (0..n).into_par_iter().map(|i| (i, f(i))).collect();
        // collect() preserves order, so a linear scan finds the first error
        let mut ok = Vec::with_capacity(n);
        for (_, r) in out.drain(..) {
            ok.push(r?);
        }
        Ok(ok)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// True when the parallel backend is compiled in.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
