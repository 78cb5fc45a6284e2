//! Chain-parallel execution. Each chain draws only from its own keyed
//! streams and results are merged by chain id, so the worker count never
//! changes an output.

use rayon::prelude::*;
use rayon::ThreadPool;
use specdiff_core::engine::{run_speculative_chain, run_target_chain};
use specdiff_core::{ChainStreams, DraftStrategy, RunStats, SpeculativeConfig, StepModel};

use crate::error::CliResult;

/// Pool with at most `threads` workers; `None` or 0 lets rayon decide.
pub fn pool(threads: Option<usize>) -> CliResult<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn target(pool: &ThreadPool, model: &dyn StepModel, eps: f64, n_chains: u64, seed: u64) -> CliResult<RunStats> {
    let chains = pool.install(|| {
        (0..n_chains)
            .into_par_iter()
            .map(|c| run_target_chain(model, eps, &ChainStreams::new(seed, c)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(RunStats::from_chains(model.steps(), 1, chains))
}

pub fn speculative(
    pool: &ThreadPool,
    model: &dyn StepModel,
    strategy: &DraftStrategy,
    cfg: &SpeculativeConfig,
    n_chains: u64,
    seed: u64,
) -> CliResult<RunStats> {
    cfg.validate()?;
    strategy.validate()?;
    let chains = pool.install(|| {
        (0..n_chains)
            .into_par_iter()
            .map(|c| run_speculative_chain(model, strategy, cfg, &ChainStreams::new(seed, c)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(RunStats::from_chains(model.steps(), cfg.lookahead, chains))
}
