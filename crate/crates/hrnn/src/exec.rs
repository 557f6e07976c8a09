use hrnn_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{Result, RunError};

/// Runs jobs on a dedicated rayon pool. Output order matches input order.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `jobs = 0` lets rayon pick the thread count.
    pub fn new(jobs: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| RunError::Config(format!("cannot start {jobs} workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}
