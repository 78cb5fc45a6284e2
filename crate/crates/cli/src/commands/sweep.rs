//! `sweep`: NFE and acceptance against one parameter, per drafting strategy.

use std::path::PathBuf;

use rayon::ThreadPool;
use serde::Serialize;

use super::{csv_writer, distance, finish_csv, sample_set};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::runner;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eps,
    Lookahead,
    Dim,
}

impl SweepParam {
    pub fn parse(name: &str) -> CliResult<Self> {
        match name {
            "eps" => Ok(Self::Eps),
            "L" | "lookahead" => Ok(Self::Lookahead),
            "d" | "dim" => Ok(Self::Dim),
            other => Err(CliError::config(format!("cannot sweep {other:?}; use eps, L or d"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::Lookahead => "L",
            Self::Dim => "d",
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> CliResult<()> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::config(format!("{} needs positive integer values, got {value}", self.name())))
            }
        };
        match self {
            Self::Eps => cfg.sampler.eps = value,
            Self::Lookahead => cfg.speculative.lookahead = count()?,
            Self::Dim => cfg.gmm.d = count()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: f64,
    pub strategy: String,
    pub nfe_parallel_mean: f64,
    pub nfe_total_mean: f64,
    pub acceptance_rate: f64,
    pub mean_advance: f64,
    /// W2 in one dimension, sliced W2 otherwise, against the target run.
    pub sliced_w2: f64,
}

pub fn run(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<Vec<SweepRow>> {
    let param = SweepParam::parse(&cfg.sweep.param)?;
    if cfg.sweep.values.is_empty() {
        return Err(CliError::config("sweep.values is empty"));
    }
    if cfg.sweep.strategies.is_empty() {
        return Err(CliError::config("sweep.strategies is empty"));
    }
    if param == SweepParam::Dim && cfg.gmm.path.is_some() {
        return Err(CliError::config("a d sweep needs a random mixture, not gmm.path"));
    }
    let mut rows = Vec::new();
    for &value in &cfg.sweep.values {
        let mut point = cfg.clone();
        param.apply(&mut point, value)?;
        point.validate()?;
        let models = point.models()?;
        let spec = point.speculative_config()?;
        let seed = point.run.seed;
        let target = runner::target(pool, models.target.as_ref(), spec.eps, point.run.n_chains, seed)?;
        let target_set = sample_set(&target, "target")?;
        for name in &cfg.sweep.strategies {
            let strategy = point.strategy(name, &models)?;
            let stats = runner::speculative(pool, models.target.as_ref(), &strategy, &spec, point.run.n_chains, seed)?;
            let (_, w2) = distance(&sample_set(&stats, name)?, &target_set, seed)?;
            rows.push(SweepRow {
                param: param.name(),
                value,
                strategy: strategy.name().into(),
                nfe_parallel_mean: stats.mean_nfe_parallel(),
                nfe_total_mean: stats.mean_nfe_total(),
                acceptance_rate: stats.acceptance_rate(),
                mean_advance: stats.mean_advance(),
                sliced_w2: w2,
            });
        }
    }
    Ok(rows)
}

pub fn execute(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<Vec<PathBuf>> {
    let rows = run(cfg, pool)?;
    let (path, mut w) = csv_writer(&cfg.output.dir, "sweep.csv")?;
    for row in &rows {
        w.serialize(row)?;
    }
    finish_csv(&path, w)?;
    Ok(vec![path])
}
