//! Cost model, acceptance bounds and rejection-time diagnostics.

use alloc::vec;
use alloc::vec::Vec;

use crate::coupling::reflection_coupling;
use crate::error::{Error, Result};
use crate::models::{drift_at, ScoreModel, StepModel};
use crate::rng::{ChainStreams, RngStream};
use crate::schedule::Schedule;
use crate::special::{chi2_cdf, normal_cdf};

/// Relative evaluation costs of draft and target drifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub c_p: f64,
    pub c_q: f64,
    pub lookahead: usize,
}

impl CostModel {
    pub fn new(c_p: f64, c_q: f64, lookahead: usize) -> Result<Self> {
        if !(c_p >= 0.0) || !(c_q > 0.0) || lookahead == 0 {
            return Err(Error::arg("cost model needs c_p >= 0, c_q > 0 and L >= 1"));
        }
        Ok(Self { c_p, c_q, lookahead })
    }

    /// A draft at least as expensive as the target cannot pay off.
    pub fn is_meaningful(&self) -> bool {
        self.c_p < self.c_q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRatio {
    pub mean_advance: f64,
    /// `E[L^] / (1 + L c_p / c_q)`.
    pub ratio: f64,
    /// `E[L^]/L - c_p/c_q - 1/L`; speculation pays off when positive.
    pub break_even: f64,
}

pub fn cost_ratio(advances: &[f64], cm: &CostModel) -> Result<CostRatio> {
    if advances.is_empty() {
        return Err(Error::arg("cost ratio needs at least one advance"));
    }
    let mean_advance = advances.iter().sum::<f64>() / advances.len() as f64;
    let l = cm.lookahead as f64;
    let rel = cm.c_p / cm.c_q;
    Ok(CostRatio { mean_advance, ratio: mean_advance / (1.0 + l * rel), break_even: mean_advance / l - rel - 1.0 / l })
}

/// `E[L^] = sum_{l<L} (l+1) a^l (1-a) + L a^L` when every draft is accepted
/// independently with probability `a`.
pub fn expected_advance(alpha: f64, lookahead: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain { what: "acceptance probability", value: alpha });
    }
    if lookahead == 0 {
        return Err(Error::arg("lookahead must be at least 1"));
    }
    let mut sum = 0.0;
    let mut pow = 1.0;
    for l in 0..lookahead {
        sum += (l + 1) as f64 * pow * (1.0 - alpha);
        pow *= alpha;
    }
    Ok(sum + lookahead as f64 * pow)
}

/// One window of the constant-acceptance process.
pub fn simulate_advance(alpha: f64, lookahead: usize, rng: &mut RngStream) -> usize {
    for l in 0..lookahead {
        if rng.uniform() >= alpha {
            return l + 1;
        }
    }
    lookahead
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceBound {
    /// `exp(-gamma (eps + 1/eps)^2 g^2 E||s^p - s^q||^2 / 8)`.
    pub bound: f64,
    pub score_gap_mse: f64,
    /// Monte Carlo mean of `min(1, a_n)`.
    pub empirical_acceptance: f64,
    pub empirical_std_err: f64,
}

/// Lower bound on the mean acceptance of a one-step independent draft at
/// grid time `t`, paired with its Monte Carlo counterpart. States are drawn
/// from the exact target marginal, so `target` must be a mixture.
pub fn acceptance_lower_bound(
    draft: &ScoreModel,
    target: &ScoreModel,
    schedule: &Schedule,
    t: f64,
    gamma: f64,
    eps: f64,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<AcceptanceBound> {
    if !(eps > 0.0) {
        return Err(Error::arg("the acceptance bound needs eps > 0"));
    }
    if !(gamma > 0.0) || n_mc == 0 {
        return Err(Error::arg("the acceptance bound needs gamma > 0 and n_mc >= 1"));
    }
    if draft.dim() != target.dim() {
        return Err(Error::arg("draft and target dimensions differ"));
    }
    let gmm = target.gmm().ok_or_else(|| Error::arg("the target must be a Gaussian mixture"))?;
    let u = schedule.clamp(1.0 - t);
    let c = schedule.eval(u)?;
    let sigma = libm::sqrt(gamma * c.g2) * eps;
    if !(sigma > 0.0) {
        return Err(Error::arg("step std is zero at this time"));
    }
    let d = target.dim();
    let (mut x, mut sp, mut sq, mut bp, mut bq, mut z) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut gap_sum, mut acc_sum, mut acc_sq) = (0.0, 0.0, 0.0);
    for _ in 0..n_mc {
        gmm.sample_marginal(&c, rng, &mut x);
        draft.score(schedule, u, &x, &mut sp)?;
        target.score(schedule, u, &x, &mut sq)?;
        gap_sum += sp.iter().zip(&sq).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        drift_at(draft, schedule, u, &x, eps, &mut bp)?;
        drift_at(target, schedule, u, &x, eps, &mut bq)?;
        let m_p: Vec<f64> = x.iter().zip(&bp).map(|(xi, b)| xi + gamma * b).collect();
        let m_q: Vec<f64> = x.iter().zip(&bq).map(|(xi, b)| xi + gamma * b).collect();
        rng.fill_normal(&mut z);
        let out = reflection_coupling(&m_p, &m_q, sigma, &z, 0.0)?;
        let a = libm::exp(out.log_accept_ratio.min(0.0));
        acc_sum += a;
        acc_sq += a * a;
    }
    let n = n_mc as f64;
    let score_gap_mse = gap_sum / n;
    let mean = acc_sum / n;
    let var = (acc_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let k = eps + 1.0 / eps;
    Ok(AcceptanceBound {
        bound: libm::exp(-0.125 * gamma * k * k * c.g2 * score_gap_mse),
        score_gap_mse,
        empirical_acceptance: mean,
        empirical_std_err: libm::sqrt(var / n),
    })
}

/// Monte Carlo survival function `P(tau > k)`, `k = 0..=k_max`, of the first
/// rejection time when every step drafts from the current state with `draft`
/// and verifies against `target` by reflection coupling.
pub fn rejection_time_tail(
    draft: &dyn StepModel,
    target: &dyn StepModel,
    eps: f64,
    k_max: usize,
    n_mc: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if draft.dim() != target.dim() || draft.steps() != target.steps() {
        return Err(Error::arg("draft and target must share dimension and grid"));
    }
    if k_max > target.steps() {
        return Err(Error::arg("k_max exceeds the number of steps"));
    }
    if !(eps > 0.0) || n_mc == 0 {
        return Err(Error::arg("the tail estimate needs eps > 0 and n_mc >= 1"));
    }
    let d = target.dim();
    let gamma = target.gamma();
    let mut survived = vec![0u64; k_max + 1];
    let (mut y, mut bp, mut bq, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for chain in 0..n_mc {
        let streams = ChainStreams::new(seed, chain);
        streams.initial(&mut y);
        survived[0] += 1;
        for (k, count) in survived.iter_mut().enumerate().skip(1) {
            draft.drift(k - 1, &y, eps, &mut bp)?;
            target.drift(k - 1, &y, eps, &mut bq)?;
            let m_p: Vec<f64> = y.iter().zip(&bp).map(|(a, b)| a + gamma * b).collect();
            let m_q: Vec<f64> = y.iter().zip(&bq).map(|(a, b)| a + gamma * b).collect();
            streams.noise(k, &mut z);
            let out = reflection_coupling(&m_p, &m_q, target.step_sigma(k - 1, eps), &z, streams.accept_uniform(k))?;
            if !out.accepted {
                break;
            }
            *count += 1;
            y = out.y;
        }
    }
    Ok(survived.iter().map(|&s| s as f64 / n_mc as f64).collect())
}

/// `(2 Phi(-sqrt(gamma) M / 2))^k`: the tail when the step variance is `gamma`
/// and the drift gap is at least `M`.
pub fn rejection_tail_bound(gamma: f64, min_gap: f64, k: usize) -> f64 {
    libm::pow(2.0 * normal_cdf(-libm::sqrt(gamma) * min_gap / 2.0), k as f64)
}

/// Total variation `r` between `N(0, s1^2 Id)` and `N(0, s2^2 Id)`,
/// `r = P(Q <= R^2/s2^2) - P(Q <= R^2/s1^2)` with `Q ~ chi2_d`.
pub fn diff_covariance_tv(sigma1: f64, sigma2: f64, d: usize) -> Result<f64> {
    if !(sigma1 > sigma2 && sigma2 > 0.0) {
        return Err(Error::arg("need sigma1 > sigma2 > 0"));
    }
    if d == 0 {
        return Err(Error::arg("dimension must be positive"));
    }
    let (v1, v2) = (sigma1 * sigma1, sigma2 * sigma2);
    let df = d as f64;
    let r2 = df * libm::log(v1 / v2) / (1.0 / v2 - 1.0 / v1);
    Ok((chi2_cdf(r2 / v2, df) - chi2_cdf(r2 / v1, df)).clamp(0.0, 1.0))
}

/// Best achievable `P(X = Y)` for the two isotropic Gaussians: `1 - r`.
pub fn diff_covariance_overlap(sigma1: f64, sigma2: f64, d: usize) -> Result<f64> {
    Ok(1.0 - diff_covariance_tv(sigma1, sigma2, d)?)
}
