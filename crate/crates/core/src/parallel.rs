//! Worker pool for the per-iteration block operations.
//!
//! With the `parallel` feature the pool is a dedicated rayon thread pool;
//! without it every map runs on the calling thread. Either way each output
//! slot is written by exactly one task and results come back in input order,
//! so anything reduced from them afterwards is bitwise independent of the
//! worker count.

use crate::error::{Error, Result};

pub struct WorkerPool {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.workers)
            .field("threaded", &self.is_threaded())
            .finish()
    }
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .thread_name(|i| format!("pcrm-worker-{i}"))
                        .build()
                        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Self { workers, pool })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self { workers })
    }

    pub fn sequential() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Number of hardware threads, used as the "max workers" setting.
    pub fn max_workers() -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// True when maps actually fan out to worker threads.
    pub fn is_threaded(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Applies `f` to every item, returning results in input order.
    pub fn map<I, T, F>(&self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Applies `f` to `0..count`, returning results in index order.
    pub fn map_range<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..count).into_par_iter().map(&f).collect());
        }
        (0..count).map(f).collect()
    }
}
