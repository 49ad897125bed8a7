//! Order-preserving parallel map with a sequential fallback.

#[cfg(feature = "parallel")]
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("thread count must be at least 1")]
    ZeroThreads,
    #[error("could not build thread pool: {0}")]
    Pool(String),
}

/// Runs independent tasks either inline or on a dedicated rayon pool.
/// Results always come back in task order.
#[derive(Clone)]
pub enum Executor {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel(Arc<rayon::ThreadPool>),
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Executor({} threads)", self.threads())
    }
}

impl Executor {
    /// A pool of `threads` workers. One thread, or a build without the
    /// `parallel` feature, gives the sequential executor.
    pub fn with_threads(threads: usize) -> Result<Self, ExecutorError> {
        if threads == 0 {
            return Err(ExecutorError::ZeroThreads);
        }
        #[cfg(feature = "parallel")]
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| ExecutorError::Pool(e.to_string()))?;
            return Ok(Executor::Parallel(Arc::new(pool)));
        }
        Ok(Executor::Sequential)
    }

    pub fn threads(&self) -> usize {
        match self {
            Executor::Sequential => 1,
            #[cfg(feature = "parallel")]
            Executor::Parallel(pool) => pool.current_num_threads(),
        }
    }

    /// `(0..n).map(task)` with results in index order.
    pub fn map<T, F>(&self, n: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => (0..n).map(task).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel(pool) => {
                use rayon::prelude::*;
                pool.install(|| (0..n).into_par_iter().with_max_len(1).map(task).collect())
            }
        }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::Sequential
    }
}
