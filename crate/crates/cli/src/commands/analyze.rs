//! `analyze`: cost ratio, expected advance, acceptance bound, rejection-time
//! tail and the different-covariance overlap curve.

use std::path::PathBuf;

use rayon::ThreadPool;
use serde::Serialize;
use specdiff_core::analysis::{
    acceptance_lower_bound, cost_ratio, diff_covariance_tv, expected_advance, rejection_time_tail, CostModel,
};
use specdiff_core::rng::substream;
use specdiff_core::{RngStream, StepModel, StreamKey};

use super::{write_json, REPORT_CHAIN};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::runner;

#[derive(Debug, Clone, Serialize)]
pub struct AdvancePoint {
    pub alpha: f64,
    pub lookahead: usize,
    pub expected_advance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub strategy: String,
    pub c_p: f64,
    pub c_q: f64,
    pub lookahead: usize,
    pub mean_advance: f64,
    pub ratio: f64,
    pub break_even: f64,
    pub meaningful: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundPoint {
    pub t: f64,
    pub bound: f64,
    pub empirical_acceptance: f64,
    pub empirical_std_err: f64,
    pub score_gap_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapPoint {
    pub d: usize,
    /// Total variation `r` between the two isotropic Gaussians.
    pub tv: f64,
    /// `1 - r`, the best achievable `P(X = Y)`.
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub expected_advance: Vec<AdvancePoint>,
    pub cost_ratio: CostReport,
    pub advance_histogram: Vec<u64>,
    pub bound: Vec<BoundPoint>,
    /// `P(first rejection > k)` for `k = 0..=k_max`.
    pub tail_curve: Vec<f64>,
    pub overlap_sigma1: f64,
    pub overlap_sigma2: f64,
    pub overlap_curve: Vec<OverlapPoint>,
}

pub fn run(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<AnalyzeReport> {
    cfg.validate()?;
    let a = &cfg.analyze;
    let models = cfg.models()?;
    let spec = cfg.speculative_config()?;
    let seed = cfg.run.seed;
    let lookahead = spec.lookahead;

    let expected = a
        .alphas
        .iter()
        .map(|&alpha| Ok(AdvancePoint { alpha, lookahead, expected_advance: expected_advance(alpha, lookahead)? }))
        .collect::<CliResult<Vec<_>>>()?;

    let strategy = cfg.strategy(&cfg.speculative.strategy, &models)?;
    let stats = runner::speculative(pool, models.target.as_ref(), &strategy, &spec, cfg.run.n_chains, seed)?;
    let cm = CostModel::new(a.c_p, a.c_q, lookahead)?;
    let cr = cost_ratio(&stats.advances(), &cm)?;
    let cost = CostReport {
        strategy: strategy.name().into(),
        c_p: a.c_p,
        c_q: a.c_q,
        lookahead,
        mean_advance: cr.mean_advance,
        ratio: cr.ratio,
        break_even: cr.break_even,
        meaningful: cm.is_meaningful(),
    };

    let target = models.target.as_ref();
    let draft = models.draft.as_ref();
    let mut rng = RngStream::new(StreamKey::new(seed, REPORT_CHAIN, 2, substream::AUX));
    let bound = a
        .bound_times
        .iter()
        .map(|&t| {
            let b = acceptance_lower_bound(
                &draft.score,
                &target.score,
                &target.schedule,
                t,
                target.gamma(),
                spec.eps,
                a.bound_mc,
                &mut rng,
            )?;
            Ok(BoundPoint {
                t,
                bound: b.bound,
                empirical_acceptance: b.empirical_acceptance,
                empirical_std_err: b.empirical_std_err,
                score_gap_mse: b.score_gap_mse,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let k_max = a.tail_k_max.min(target.steps());
    let tail_curve = rejection_time_tail(draft, target, spec.eps, k_max, a.tail_mc, seed)?;

    if a.overlap_d_max == 0 {
        return Err(CliError::config("analyze.overlap_d_max must be at least 1"));
    }
    let overlap_curve = (1..=a.overlap_d_max)
        .map(|d| {
            let tv = diff_covariance_tv(a.overlap_sigma1, a.overlap_sigma2, d)?;
            Ok(OverlapPoint { d, tv, overlap: 1.0 - tv })
        })
        .collect::<CliResult<Vec<_>>>()?;

    Ok(AnalyzeReport {
        expected_advance: expected,
        cost_ratio: cost,
        advance_histogram: stats.advance_hist.clone(),
        bound,
        tail_curve,
        overlap_sigma1: a.overlap_sigma1,
        overlap_sigma2: a.overlap_sigma2,
        overlap_curve,
    })
}

/// Writes `analyze.json`.
pub fn execute(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<Vec<PathBuf>> {
    let report = run(cfg, pool)?;
    Ok(vec![write_json(&cfg.output.dir, "analyze.json", &report)?])
}
