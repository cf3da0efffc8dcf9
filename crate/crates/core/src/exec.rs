//! Ordered map over independent work items, data-parallel when the `parallel`
//! feature is enabled and more than one worker is requested.
//!
//! Results always come back in input order, so callers commit them
//! identically regardless of worker count or completion order.

use crate::error::Result;
#[cfg(feature = "parallel")]
use crate::error::Error;

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn serial() -> Self {
        Self {
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `threads == 0` picks the number of available cores; `1` runs inline.
    #[cfg(feature = "parallel")]
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 1 {
            return Ok(Self::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .thread_name(|i| format!("ne-sgd-worker-{i}"))
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    #[cfg(not(feature = "parallel"))]
    pub fn new(threads: usize) -> Result<Self> {
        if threads > 1 {
            log::debug!("built without the `parallel` feature; running {threads}-way work serially");
        }
        Ok(Self::serial())
    }

    pub fn threads(&self) -> usize {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.current_num_threads();
        }
        1
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            if items.len() > 1 {
                use rayon::prelude::*;
                return pool.install(|| items.par_iter().map(&f).collect());
            }
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..257).collect();
        let serial = Executor::serial().map(&items, |x| x * x);
        let parallel = Executor::new(4).unwrap().map(&items, |x| x * x);
        assert_eq!(serial, parallel);
        assert_eq!(serial[16], 256);
    }

    #[test]
    fn single_worker_is_serial() {
        assert_eq!(Executor::new(1).unwrap().threads(), 1);
    }
}
