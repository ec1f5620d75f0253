//! Thread-pool drivers for the Monte Carlo harness and the bootstrap. Both
//! reproduce their sequential counterparts exactly for any thread count.

use fmem_core::benchmark::{run_replicate, Accumulator, BenchmarkConfig, BenchmarkResult};
use fmem_core::inference::{check_request, summarize, BootstrapBands, BootstrapDraw};
use fmem_core::pipeline::{fit, PipelineConfig};
use fmem_core::MultiLevelSample;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `threads == 0` uses every available core.
pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))
}

/// Runs the replicates in parallel batches and folds them in replicate order.
pub fn benchmark(cfg: &BenchmarkConfig, threads: usize) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let pool = pool(threads)?;
    let batch = 4 * pool.current_num_threads().max(1);
    let mut acc = Accumulator::new(cfg);
    let total = cfg.scenario.monte_carlo;
    let mut start = 0;
    while start < total {
        let end = (start + batch).min(total);
        let outcomes: Vec<_> = pool.install(|| (start..end).into_par_iter().map(|r| (r, run_replicate(cfg, r))).collect());
        for (r, outcome) in outcomes {
            match outcome {
                Ok(o) => acc.push(o)?,
                Err(e) => acc.push_failure(r, &e)?,
            }
        }
        start = end;
    }
    Ok(acc.finish()?)
}

/// Parallel subject bootstrap.
pub fn bootstrap(
    sample: &MultiLevelSample,
    cfg: &PipelineConfig,
    resamples: usize,
    level: f64,
    seed: u64,
    threads: usize,
) -> Result<BootstrapBands> {
    check_request(resamples, level)?;
    let point = fit(sample, cfg)?;
    let draws: Vec<BootstrapDraw> = pool(threads)?.install(|| {
        (0..resamples)
            .into_par_iter()
            .filter_map(|b| fmem_core::inference::bootstrap_draw(sample, cfg, seed, b))
            .collect()
    });
    Ok(summarize(sample, &point, draws, resamples, level)?)
}
