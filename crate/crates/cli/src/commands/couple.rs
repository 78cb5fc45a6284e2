//! `couple`: one Gaussian pair, many coupled draws, compared with the
//! closed forms.

use std::path::PathBuf;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;
use specdiff_core::coupling::{gaussian_tv, naive_adjusted_rejection, tempered_mean_coefficient, DEFAULT_MAX_TRIALS};
use specdiff_core::linalg::{dot, norm};
use specdiff_core::metrics::ks_one_sample;
use specdiff_core::rng::substream;
use specdiff_core::special::normal_cdf;
use specdiff_core::{CouplingConfig, GaussianKernel, RngStream, StreamKey};

use super::{write_json, REPORT_CHAIN};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Draws per independently keyed block.
const BLOCK: u64 = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct CoupleReport {
    pub variant: String,
    pub tau: f64,
    pub sigma: f64,
    pub n_mc: u64,
    /// `||m_p - m_q|| / sigma`.
    pub delta_norm: f64,
    pub closed_form_tv: f64,
    /// Fraction of draws with `X != Y`.
    pub empirical: f64,
    pub empirical_std_err: f64,
    /// `C` in `E[Y] = m_q + C (m_p - m_q)`; null when the means coincide.
    pub mean_coefficient: Option<f64>,
    pub mean_coefficient_std_err: Option<f64>,
    pub mean_coefficient_closed_form: Option<f64>,
    /// Per-coordinate KS p-values of `X` against `N(m_p, sigma^2)`.
    pub ks_x_p_values: Vec<f64>,
    /// Per-coordinate KS p-values of `Y` against `N(m_q, sigma^2)`.
    pub ks_y_p_values: Vec<f64>,
    pub naive_runs: u64,
    /// Proposals per naive-rejection sample; null when TV is zero.
    pub naive_mean_trials: Option<f64>,
    pub naive_expected_trials: Option<f64>,
}

struct Block {
    xs: Vec<f64>,
    ys: Vec<f64>,
    rejected: u64,
    coef_sum: f64,
    coef_sq: f64,
}

pub fn run(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<CoupleReport> {
    let c = &cfg.couple;
    if !(c.sigma > 0.0) || !c.sigma.is_finite() {
        return Err(CliError::config(format!("couple.sigma must be positive, got {}", c.sigma)));
    }
    if c.m_p.is_empty() || c.m_p.len() != c.m_q.len() {
        return Err(CliError::config("couple.m_p and couple.m_q must be non-empty and of equal length"));
    }
    if c.n_mc == 0 {
        return Err(CliError::config("couple.n_mc must be at least 1"));
    }
    let d = c.m_p.len();
    let coupling = CouplingConfig { variant: cfg.coupling_variant(&c.variant, d)?, tau: c.tau };
    coupling.validate()?;
    let (m_p, m_q, sigma) = (&c.m_p, &c.m_q, c.sigma);
    let gap: Vec<f64> = m_p.iter().zip(m_q).map(|(a, b)| a - b).collect();
    let gap_sq = dot(&gap, &gap);
    let seed = cfg.run.seed;

    let blocks = pool.install(|| {
        (0..c.n_mc.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let n = BLOCK.min(c.n_mc - b * BLOCK) as usize;
                let mut rng = RngStream::new(StreamKey::new(seed, b, 0, substream::AUX));
                let mut z = vec![0.0; d];
                let mut out = Block {
                    xs: Vec::with_capacity(n * d),
                    ys: Vec::with_capacity(n * d),
                    rejected: 0,
                    coef_sum: 0.0,
                    coef_sq: 0.0,
                };
                for _ in 0..n {
                    rng.fill_normal(&mut z);
                    let u = rng.uniform();
                    let o = coupling.verify(m_p, m_q, sigma, &z, u)?;
                    out.rejected += u64::from(o.x != o.y);
                    if gap_sq > 0.0 {
                        let coef = o.y.iter().zip(m_q).zip(&gap).map(|((y, m), g)| (y - m) * g).sum::<f64>() / gap_sq;
                        out.coef_sum += coef;
                        out.coef_sq += coef * coef;
                    }
                    out.xs.extend_from_slice(&o.x);
                    out.ys.extend_from_slice(&o.y);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, specdiff_core::Error>>()
    })?;

    let n = c.n_mc as f64;
    let rejected: u64 = blocks.iter().map(|b| b.rejected).sum();
    let empirical = rejected as f64 / n;
    let (coef_sum, coef_sq) = blocks.iter().fold((0.0, 0.0), |(s, q), b| (s + b.coef_sum, q + b.coef_sq));
    let delta_norm = norm(&gap) / sigma;
    let (mean_coefficient, mean_coefficient_std_err, mean_coefficient_closed_form) = if gap_sq > 0.0 {
        let mean = coef_sum / n;
        let var = (coef_sq / n - mean * mean).max(0.0);
        let closed = matches!(coupling.variant, specdiff_core::CouplingVariant::Reflection)
            .then(|| tempered_mean_coefficient(delta_norm, c.tau))
            .transpose()?;
        (Some(mean), Some((var / n).sqrt()), closed)
    } else {
        (None, None, None)
    };

    let column = |data: &[f64], j: usize| -> Vec<f64> { data.iter().skip(j).step_by(d).copied().collect() };
    let xs: Vec<f64> = blocks.iter().flat_map(|b| b.xs.iter().copied()).collect();
    let ys: Vec<f64> = blocks.iter().flat_map(|b| b.ys.iter().copied()).collect();
    let ks = |data: &[f64], means: &[f64]| -> CliResult<Vec<f64>> {
        (0..d)
            .map(|j| {
                let m = means[j];
                Ok(ks_one_sample(&column(data, j), |v| normal_cdf((v - m) / sigma))?.p_value)
            })
            .collect()
    };
    let (ks_x_p_values, ks_y_p_values) = (ks(&xs, m_p)?, ks(&ys, m_q)?);

    let tv = gaussian_tv(m_p, m_q, sigma)?;
    let (naive_mean_trials, naive_expected_trials) = if tv > 0.0 && c.n_naive > 0 {
        let p = GaussianKernel::new(m_p.clone(), sigma)?;
        let q = GaussianKernel::new(m_q.clone(), sigma)?;
        let mut rng = RngStream::new(StreamKey::new(seed, REPORT_CHAIN, 1, substream::AUX));
        let mut trials = 0u64;
        for _ in 0..c.n_naive {
            trials += naive_adjusted_rejection(&p, &q, &mut rng, DEFAULT_MAX_TRIALS)?.1;
        }
        (Some(trials as f64 / c.n_naive as f64), Some(1.0 / tv))
    } else {
        (None, None)
    };

    Ok(CoupleReport {
        variant: c.variant.clone(),
        tau: c.tau,
        sigma,
        n_mc: c.n_mc,
        delta_norm,
        closed_form_tv: tv,
        empirical,
        empirical_std_err: (empirical * (1.0 - empirical) / n).sqrt(),
        mean_coefficient,
        mean_coefficient_std_err,
        mean_coefficient_closed_form,
        ks_x_p_values,
        ks_y_p_values,
        naive_runs: c.n_naive,
        naive_mean_trials,
        naive_expected_trials,
    })
}

/// Writes `couple.json`.
pub fn execute(cfg: &ExperimentConfig, pool: &ThreadPool) -> CliResult<Vec<PathBuf>> {
    let report = run(cfg, pool)?;
    Ok(vec![write_json(&cfg.output.dir, "couple.json", &report)?])
}
