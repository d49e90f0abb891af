//! Campaigns with trials spread over a rayon pool.
//!
//! Trials run in seed-ordered batches and are merged in seed order, so the
//! result is the same as the sequential loop whatever the thread count.

use std::env;

use dmgen_core::datagen::{check_campaign, default_max_attempts};
use dmgen_core::{generate_trial, DatagenError, GeneratedDataset, GenerationConfig, PreparedSource, TaskSpec};
use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "DMG_THREADS";

/// Thread cap from `DMG_THREADS`; `None` when unset, empty or not a positive integer.
pub fn threads_from_env() -> Option<usize> {
    env::var(THREADS_VAR).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Parallel counterpart of [`dmgen_core::generate_dataset`], same result.
pub fn generate_dataset(
    prepared: &PreparedSource,
    spec: &TaskSpec,
    config: &GenerationConfig,
    target: usize,
    seed0: u64,
    max_attempts: Option<usize>,
    threads: Option<usize>,
) -> Result<GeneratedDataset, DatagenError> {
    check_campaign(spec, config, target)?;
    let max = max_attempts.unwrap_or_else(|| default_max_attempts(target));
    let mut builder = ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().expect("thread pool");
    let batch = pool.current_num_threads().max(1) * 8;

    let mut ds = GeneratedDataset::new(&spec.name, &config.variant, seed0);
    let mut next = 0usize;
    while next < max {
        // Never run more trials than could still be needed.
        let missing = target - ds.n_successes();
        let len = batch.max(missing).min(max - next);
        let records: Vec<_> = pool.install(|| {
            (next..next + len)
                .into_par_iter()
                .map(|a| generate_trial(prepared, spec, config, seed0.wrapping_add(a as u64)))
                .collect()
        });
        next += len;
        for r in records {
            if ds.push(r, target) {
                return Ok(ds);
            }
        }
    }
    Err(DatagenError::TargetUnreachable(Box::new(ds)))
}
