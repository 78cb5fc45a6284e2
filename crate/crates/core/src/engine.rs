//! Target and speculative chains.
//!
//! Every random draw is keyed by `(seed, chain, step, substream)`: the initial
//! state uses `(0, INIT)`, the increment into state `k` uses `(k, NOISE)` and
//! the acceptance uniform for step `k` uses `(k, ACCEPT)`. Chains therefore
//! reproduce exactly whatever the thread layout.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::coupling::{
    projected_reflection_coupling, tempered_reflection_coupling, typical_verify, CouplingOutcome, Projection,
};
use crate::drafting::DraftStrategy;
use crate::error::{Error, Result};
use crate::models::{target_kernel, StepModel};
use crate::rng::ChainStreams;

#[derive(Debug, Clone)]
pub enum CouplingVariant {
    /// Reflection maximal coupling, tempered when `tau != 1`.
    Reflection,
    /// Typical-acceptance rule with reflection on rejection.
    Typical { kappa: f64, delta: f64 },
    /// Reflection in the range of a latent projection.
    Projected(Arc<Projection>),
}

#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub variant: CouplingVariant,
    pub tau: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { variant: CouplingVariant::Reflection, tau: 1.0 }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::arg(format!("tau must be positive, got {}", self.tau)));
        }
        if let CouplingVariant::Typical { kappa, delta } = self.variant {
            if !(kappa > 0.0 && delta > 0.0) {
                return Err(Error::arg("typical acceptance needs kappa > 0 and delta > 0"));
            }
        }
        Ok(())
    }

    pub fn verify(&self, m_p: &[f64], m_q: &[f64], sigma: f64, z: &[f64], u: f64) -> Result<CouplingOutcome> {
        match &self.variant {
            CouplingVariant::Reflection => tempered_reflection_coupling(m_p, m_q, sigma, z, u, self.tau),
            CouplingVariant::Typical { kappa, delta } => typical_verify(m_p, m_q, sigma, z, u, *kappa, *delta),
            CouplingVariant::Projected(p) => projected_reflection_coupling(p, m_p, m_q, sigma, z, u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpeculativeConfig {
    /// Window length `L`.
    pub lookahead: usize,
    pub eps: f64,
    pub coupling: CouplingConfig,
}

impl SpeculativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead == 0 {
            return Err(Error::arg("lookahead L must be at least 1"));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::arg(format!(
                "speculative sampling needs eps > 0 (got {}); deterministic samplers are unsupported",
                self.eps
            )));
        }
        self.coupling.validate()
    }
}

/// Outcome of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub chain: u64,
    pub sample: Vec<f64>,
    pub nfe_parallel: u64,
    pub nfe_total: u64,
    pub nfe_draft: u64,
    /// Accepted drafts per transition index `k` (step into state `k + 1`).
    pub accepted: Vec<u32>,
    /// Verified drafts per transition index.
    pub verified: Vec<u32>,
    /// Advance `L^` of each window, in order.
    pub advances: Vec<usize>,
}

/// Aggregate over chains. Merging is a sum of counters plus samples placed by
/// chain id, so the result does not depend on completion order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub lookahead: usize,
    pub n_chains: u64,
    pub nfe_parallel: u64,
    pub nfe_total: u64,
    pub nfe_draft: u64,
    pub accept_by_step: Vec<u64>,
    pub verified_by_step: Vec<u64>,
    /// `advance_hist[l]` counts windows with `L^ = l`.
    pub advance_hist: Vec<u64>,
    /// Final states ordered by chain id.
    pub samples: Vec<Vec<f64>>,
}

impl RunStats {
    pub fn from_chains(steps: usize, lookahead: usize, mut chains: Vec<ChainResult>) -> Self {
        chains.sort_by_key(|c| c.chain);
        let mut stats = Self {
            steps,
            lookahead,
            n_chains: 0,
            nfe_parallel: 0,
            nfe_total: 0,
            nfe_draft: 0,
            accept_by_step: vec![0; steps],
            verified_by_step: vec![0; steps],
            advance_hist: vec![0; lookahead + 1],
            samples: Vec::with_capacity(chains.len()),
        };
        for c in chains {
            stats.n_chains += 1;
            stats.nfe_parallel += c.nfe_parallel;
            stats.nfe_total += c.nfe_total;
            stats.nfe_draft += c.nfe_draft;
            for (acc, a) in stats.accept_by_step.iter_mut().zip(&c.accepted) {
                *acc += u64::from(*a);
            }
            for (acc, v) in stats.verified_by_step.iter_mut().zip(&c.verified) {
                *acc += u64::from(*v);
            }
            for &l in &c.advances {
                stats.advance_hist[l] += 1;
            }
            stats.samples.push(c.sample);
        }
        stats
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn windows(&self) -> u64 {
        self.advance_hist.iter().sum()
    }

    pub fn mean_nfe_parallel(&self) -> f64 {
        self.nfe_parallel as f64 / self.n_chains.max(1) as f64
    }

    pub fn mean_nfe_total(&self) -> f64 {
        self.nfe_total as f64 / self.n_chains.max(1) as f64
    }

    pub fn mean_nfe_draft(&self) -> f64 {
        self.nfe_draft as f64 / self.n_chains.max(1) as f64
    }

    /// Fraction of verified drafts that were accepted.
    pub fn acceptance_rate(&self) -> f64 {
        let v: u64 = self.verified_by_step.iter().sum();
        if v == 0 {
            return f64::NAN;
        }
        self.accept_by_step.iter().sum::<u64>() as f64 / v as f64
    }

    pub fn mean_advance(&self) -> f64 {
        let w = self.windows();
        if w == 0 {
            return f64::NAN;
        }
        let total: u64 = self.advance_hist.iter().enumerate().map(|(l, c)| l as u64 * c).sum();
        total as f64 / w as f64
    }

    /// Advances expanded into one entry per window.
    pub fn advances(&self) -> Vec<f64> {
        self.advance_hist.iter().enumerate().flat_map(|(l, &c)| core::iter::repeat_n(l as f64, c as usize)).collect()
    }

    /// Column `i` of the samples.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }
}

/// Plain Euler–Maruyama chain `Y_{k+1} = m^q_k(Y_k) + sigma_k z_{k+1}`.
pub fn run_target_chain(model: &dyn StepModel, eps: f64, streams: &ChainStreams) -> Result<ChainResult> {
    if !(eps >= 0.0) {
        return Err(Error::arg("eps must be non-negative"));
    }
    let d = model.dim();
    let k_total = model.steps();
    let mut y = vec![0.0; d];
    streams.initial(&mut y);
    let mut z = vec![0.0; d];
    for k in 0..k_total {
        let q = target_kernel(model, k, &y, eps)?;
        streams.noise(k + 1, &mut z);
        for ((yi, m), zi) in y.iter_mut().zip(&q.mean).zip(&z) {
            *yi = m + q.sigma * zi;
        }
    }
    check_finite(&y)?;
    Ok(ChainResult {
        chain: streams.chain,
        sample: y,
        nfe_parallel: k_total as u64,
        nfe_total: k_total as u64,
        nfe_draft: 0,
        accepted: vec![0; k_total],
        verified: vec![0; k_total],
        advances: Vec::new(),
    })
}

/// Speculative chain: draft a window, verify it step by step against the
/// target kernels, and restart from the first rejected step.
pub fn run_speculative_chain(
    model: &dyn StepModel,
    strategy: &DraftStrategy,
    cfg: &SpeculativeConfig,
    streams: &ChainStreams,
) -> Result<ChainResult> {
    cfg.validate()?;
    let d = model.dim();
    let k_total = model.steps();
    let mut res = ChainResult {
        chain: streams.chain,
        sample: vec![0.0; d],
        nfe_parallel: 0,
        nfe_total: 0,
        nfe_draft: 0,
        accepted: vec![0; k_total],
        verified: vec![0; k_total],
        advances: Vec::new(),
    };
    let mut y = vec![0.0; d];
    streams.initial(&mut y);
    let mut n = 0;
    while n < k_total {
        let window = strategy.draft(model, n, &y, cfg.lookahead, cfg.eps, streams)?;
        let len = window.len();
        // one batched round evaluates m^q at y~_{n..n_L-1}
        let reused = u64::from(window.first_target_mean.is_some());
        res.nfe_parallel += 1 + window.extra_rounds;
        res.nfe_total += window.target_evals + len as u64 - reused;
        res.nfe_draft += window.draft_evals;

        let mut advance = len;
        let mut next = None;
        for j in 0..len {
            let k = n + 1 + j;
            let prev = if j == 0 { &y } else { &window.states[j - 1] };
            let m_q = match (&window.first_target_mean, j) {
                (Some(m), 0) => m.clone(),
                _ => target_kernel(model, k - 1, prev, cfg.eps)?.mean,
            };
            let u = streams.accept_uniform(k);
            let out = cfg.coupling.verify(&window.kernel_means[j], &m_q, window.sigmas[j], &window.noises[j], u)?;
            res.verified[k - 1] += 1;
            if out.accepted {
                res.accepted[k - 1] += 1;
            } else {
                advance = j + 1;
                next = Some(out.y);
                break;
            }
        }
        y = match next {
            Some(rejected) => rejected,
            None => window.states[len - 1].clone(),
        };
        check_finite(&y)?;
        res.advances.push(advance);
        n += advance;
    }
    res.sample = y;
    Ok(res)
}

fn check_finite(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric("chain state became non-finite"))
    }
}

/// Sequential baseline over `n_chains` chains.
pub fn run_target(model: &dyn StepModel, eps: f64, n_chains: u64, seed: u64) -> Result<RunStats> {
    let chains =
        (0..n_chains).map(|c| run_target_chain(model, eps, &ChainStreams::new(seed, c))).collect::<Result<Vec<_>>>()?;
    Ok(RunStats::from_chains(model.steps(), 1, chains))
}

/// Sequential speculative run over `n_chains` chains.
pub fn run_speculative(
    model: &dyn StepModel,
    strategy: &DraftStrategy,
    cfg: &SpeculativeConfig,
    n_chains: u64,
    seed: u64,
) -> Result<RunStats> {
    cfg.validate()?;
    strategy.validate()?;
    let chains = (0..n_chains)
        .map(|c| run_speculative_chain(model, strategy, cfg, &ChainStreams::new(seed, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunStats::from_chains(model.steps(), cfg.lookahead, chains))
}
