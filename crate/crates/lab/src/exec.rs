use histories_lab_core::bohm::{Executor, Walker};
use rayon::prelude::*;

use crate::error::LabError;

/// Caps the worker threads; absent means one per available core.
pub const THREADS_ENV: &str = "HISTORIES_LAB_THREADS";

/// Walkers updated in parallel on the current rayon pool. Each walker is
/// independent, so results do not depend on the thread count.
#[derive(Clone, Copy, Debug, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn for_each(&self, walkers: &mut [Walker], update: &(dyn Fn(&mut Walker) + Sync)) {
        walkers.par_iter_mut().with_min_len(256).for_each(update);
    }
}

pub fn thread_count() -> Result<Option<usize>, LabError> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(LabError::invalid(THREADS_ENV, e.to_string())),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(LabError::invalid(
                THREADS_ENV,
                format!("must be a positive integer, got {raw:?}"),
            )),
        },
    }
}

pub fn thread_pool() -> Result<rayon::ThreadPool, LabError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| LabError::invalid(THREADS_ENV, e.to_string()))
}
