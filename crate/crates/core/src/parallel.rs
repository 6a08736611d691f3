//! Scheduling of independent work units.
//!
//! Callers split their work into a fixed number of units whose results are
//! returned in unit order, so any reduction over them is independent of the
//! worker count.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

/// How work units are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool. Without the `parallel` feature this runs
    /// sequentially.
    #[default]
    Parallel,
    /// A dedicated pool with this many threads (0 = one per core).
    Workers(usize),
}

impl Execution {
    /// `Sequential` for one worker, a dedicated pool otherwise.
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Parallel,
            Some(1) => Execution::Sequential,
            Some(w) => Execution::Workers(w),
        }
    }
}

/// Evaluates `f(0..units)` and returns the results in unit order.
pub fn map_units<T, F>(units: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..units).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..units).into_par_iter().map(f).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::Workers(workers) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::param("workers", e.to_string()))?;
            pool.install(|| (0..units).into_par_iter().map(f).collect())
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel | Execution::Workers(_) => (0..units).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn results_keep_unit_order() {
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Workers(3)] {
            let out = map_units(50, exec, |k| Ok(k * k)).unwrap();
            assert_eq!(out, (0..50).map(|k| k * k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn first_error_is_returned() {
        let err = map_units(10, Execution::Sequential, |k| {
            if k == 4 {
                Err(Error::param("k", "four"))
            } else {
                Ok(k)
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("four"));
    }
}
