//! Data-parallel execution with a sequential fallback.
//!
//! Every batch loop in the engine goes through [`Executor`]. With the
//! `parallel` feature the parallel mode runs on a dedicated rayon pool;
//! without it both modes run on the calling thread. Results are always
//! returned in input order, so output never depends on the mode.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("parallel", &self.is_parallel())
            .field("workers", &self.workers())
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::parallel(None)
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A worker pool of `workers` threads (default: available parallelism).
    #[allow(unused_variables)]
    pub fn parallel(workers: Option<usize>) -> Self {
        #[cfg(feature = "parallel")]
        {
            let threads = workers.unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .thread_name(|i| format!("cfc-worker-{i}"))
                .build()
                .ok()
                .map(Arc::new);
            Executor { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Self::sequential()
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn workers(&self) -> usize {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.current_num_threads();
        }
        1
    }

    /// Order-preserving map.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Maps contiguous chunks and returns the per-chunk results in chunk order.
    pub fn map_chunks<T, U, F>(&self, items: &[T], chunk_size: usize, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&[T]) -> U + Sync + Send,
    {
        let chunk_size = chunk_size.max(1);
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_chunks(chunk_size).map(&f).collect());
        }
        items.chunks(chunk_size).map(f).collect()
    }
}
