//! `sample`: target and speculative runs from the same seed, compared.

use std::path::PathBuf;

use rayon::ThreadPool;
use serde::Serialize;
use specdiff_core::RunStats;

use super::{compare, csv_writer, finish_csv, write_json, Comparison};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::runner;

#[derive(Debug, Clone, Serialize)]
pub struct TargetSummary {
    pub nfe_parallel_mean: f64,
    pub nfe_total_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub nfe_parallel_mean: f64,
    pub nfe_total_mean: f64,
    pub nfe_draft_mean: f64,
    pub acceptance_rate: f64,
    pub mean_advance: f64,
    /// Windows per advance length `0..=L`.
    pub advance_histogram: Vec<u64>,
    /// Acceptance frequency per transition; null where nothing was verified.
    pub acceptance_by_step: Vec<Option<f64>>,
}

impl RunSummary {
    pub fn new(stats: &RunStats) -> Self {
        Self {
            nfe_parallel_mean: stats.mean_nfe_parallel(),
            nfe_total_mean: stats.mean_nfe_total(),
            nfe_draft_mean: stats.mean_nfe_draft(),
            acceptance_rate: stats.acceptance_rate(),
            mean_advance: stats.mean_advance(),
            advance_histogram: stats.advance_hist.clone(),
            acceptance_by_step: stats
                .accept_by_step
                .iter()
                .zip(&stats.verified_by_step)
                .map(|(&a, &v)| (v > 0).then(|| a as f64 / v as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub d: usize,
    pub steps: usize,
    pub eps: f64,
    pub strategy: String,
    pub coupling: String,
    pub lookahead: usize,
    pub tau: f64,
    pub n_chains: u64,
    pub seed: u64,
    pub target: TargetSummary,
    pub speculative: RunSummary,
    pub comparison: Comparison,
}

pub struct SampleOutput {
    pub report: SampleReport,
    pub target: RunStats,
    pub speculative: RunStats,
}

pub fn run(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<SampleOutput> {
    cfg.validate()?;
    let models = cfg.models()?;
    let strategy = cfg.strategy(&cfg.speculative.strategy, &models)?;
    let spec = cfg.speculative_config()?;
    let seed = cfg.run.seed;
    let target = runner::target(pool, models.target.as_ref(), spec.eps, cfg.run.n_chains, seed)?;
    let speculative = runner::speculative(pool, models.target.as_ref(), &strategy, &spec, cfg.run.n_chains, seed)?;
    let report = SampleReport {
        d: target.dim(),
        steps: cfg.sampler.steps,
        eps: spec.eps,
        strategy: strategy.name().into(),
        coupling: cfg.speculative.coupling.clone(),
        lookahead: spec.lookahead,
        tau: spec.coupling.tau,
        n_chains: cfg.run.n_chains,
        seed,
        target: TargetSummary {
            nfe_parallel_mean: target.mean_nfe_parallel(),
            nfe_total_mean: target.mean_nfe_total(),
        },
        speculative: RunSummary::new(&speculative),
        comparison: compare(&speculative, &target, seed)?,
    };
    Ok(SampleOutput { report, target, speculative })
}

/// Runs and writes `samples.csv` and `stats.json`.
pub fn execute(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<Vec<PathBuf>> {
    let out = run(cfg, pool)?;
    let dir = &cfg.output.dir;
    let (path, mut w) = csv_writer(dir, "samples.csv")?;
    let d = out.target.dim();
    let mut header = vec!["run".to_string(), "chain".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (label, stats) in [("target", &out.target), ("speculative", &out.speculative)] {
        for (chain, x) in stats.samples.iter().enumerate() {
            let mut row = vec![label.to_string(), chain.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    finish_csv(&path, w)?;
    let stats = write_json(dir, "stats.json", &out.report)?;
    Ok(vec![path, stats])
}
