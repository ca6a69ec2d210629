use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`. Results never depend on the worker count.
pub fn install<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Configuration("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Configuration(e.to_string())),
    }
}

/// Order-preserving parallel map with early error return.
pub(crate) fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    items.par_iter().map(f).collect()
}
