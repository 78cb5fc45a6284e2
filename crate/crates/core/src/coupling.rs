//! Verification kernels.
//!
//! All Gaussian variants share one acceptance/reflection kernel parameterised
//! by an effective direction `d*`:
//!
//! ```text
//! log r = -z.d* - (delta.d*) / 2          accept iff u <= exp(min(0, log r))
//! y     = m_q + sigma (z - 2 (z.d*) / (delta.d*) delta)   on rejection
//! ```
//!
//! with `delta = (m_p - m_q) / sigma`. Plain reflection uses `d* = delta`, the
//! projected variant `d* = A^+ A delta`, the encoder variant
//! `d* = dec(enc(delta))`. Kernels never own randomness: `z` and `u` come from
//! the caller.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dot, norm, Matrix};
use crate::models::GaussianKernel;
use crate::rng::RngStream;
use crate::special::{normal_cdf, normal_pdf};

/// `||delta||` (or `delta.d*`) below this is treated as an exact match.
pub const DELTA_TOL: f64 = 1e-12;

/// Default proposal cap for [`naive_adjusted_rejection`].
pub const DEFAULT_MAX_TRIALS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOutcome {
    /// Draft sample, marginally `N(m_p, sigma^2 Id)`.
    pub x: Vec<f64>,
    /// Output sample, marginally `N(m_q, sigma^2 Id)` for exact variants.
    pub y: Vec<f64>,
    pub accepted: bool,
    /// Log of the acceptance ratio before clamping at zero.
    pub log_accept_ratio: f64,
}

fn check_inputs(m_p: &[f64], m_q: &[f64], sigma: f64, z: &[f64]) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!(
            "coupling needs sigma > 0 (got {sigma}); deterministic kernels cannot be coupled"
        )));
    }
    if m_p.len() != m_q.len() || m_p.len() != z.len() {
        return Err(Error::arg("coupling inputs have mismatched dimensions"));
    }
    if !all_finite(m_p) || !all_finite(m_q) || !all_finite(z) {
        return Err(Error::numeric("non-finite coupling input"));
    }
    Ok(())
}

pub(crate) fn scaled_gap(m_p: &[f64], m_q: &[f64], sigma: f64) -> Vec<f64> {
    m_p.iter().zip(m_q).map(|(p, q)| (p - q) / sigma).collect()
}

/// Acceptance test in log space: `u <= exp(min(0, log_ratio))`.
#[inline]
pub fn accept_log_ratio(u: f64, log_ratio: f64) -> bool {
    u <= libm::exp(log_ratio.min(0.0))
}

/// Shared kernel; `scale` divides the log ratio (temperature).
fn directed_coupling(
    m_p: &[f64],
    m_q: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
    delta: &[f64],
    dir: &[f64],
    scale: f64,
) -> Result<CouplingOutcome> {
    let x: Vec<f64> = m_p.iter().zip(z).map(|(m, zi)| m + sigma * zi).collect();
    let dd = dot(delta, dir);
    if !dd.is_finite() {
        return Err(Error::numeric("non-finite coupling direction"));
    }
    if dd.abs() <= DELTA_TOL * DELTA_TOL || norm(delta) <= DELTA_TOL {
        return Ok(CouplingOutcome { y: x.clone(), x, accepted: true, log_accept_ratio: 0.0 });
    }
    let zd = dot(z, dir);
    let log_accept_ratio = (-zd - 0.5 * dd) / scale;
    if accept_log_ratio(u, log_accept_ratio) {
        return Ok(CouplingOutcome { y: x.clone(), x, accepted: true, log_accept_ratio });
    }
    let c = 2.0 * zd / dd;
    let y = m_q.iter().zip(z).zip(delta).map(|((m, zi), di)| m + sigma * (zi - c * di)).collect();
    Ok(CouplingOutcome { x, y, accepted: false, log_accept_ratio })
}

/// Reflection maximal coupling of `N(m_p, sigma^2 Id)` and `N(m_q, sigma^2 Id)`.
/// `z` is the standard normal draw generating `x = m_p + sigma z`.
pub fn reflection_coupling(m_p: &[f64], m_q: &[f64], sigma: f64, z: &[f64], u: f64) -> Result<CouplingOutcome> {
    check_inputs(m_p, m_q, sigma, z)?;
    let delta = scaled_gap(m_p, m_q, sigma);
    directed_coupling(m_p, m_q, sigma, z, u, &delta, &delta, 1.0)
}

/// Reflection coupling with the acceptance ratio computed under `N(0, tau Id)`.
/// `tau = 1` is [`reflection_coupling`]; `tau > 1` accepts more often at the
/// price of a biased output law.
pub fn tempered_reflection_coupling(
    m_p: &[f64],
    m_q: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
    tau: f64,
) -> Result<CouplingOutcome> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::arg(format!("temperature must be positive, got {tau}")));
    }
    check_inputs(m_p, m_q, sigma, z)?;
    let delta = scaled_gap(m_p, m_q, sigma);
    directed_coupling(m_p, m_q, sigma, z, u, &delta, &delta, tau)
}

/// Latent projection `A` (r x d, `A A^T` invertible) with the precomputed
/// orthogonal projector `A^+ A`, where `A^+ = A^T (A A^T)^{-1}`.
#[derive(Debug, Clone)]
pub struct Projection {
    a: Matrix,
    pinv: Matrix,
    projector: Matrix,
}

impl Projection {
    pub fn new(a: Matrix) -> Result<Self> {
        if a.rows() > a.cols() {
            return Err(Error::arg("projection must have at most as many rows as columns"));
        }
        let gram = a.matmul(&a.transpose());
        let gram_inv = gram.inverse(1e-12).map_err(|_| Error::arg("A A^T is singular"))?;
        let pinv = a.transpose().matmul(&gram_inv);
        let projector = pinv.matmul(&a);
        Ok(Self { a, pinv, projector })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn pseudo_inverse(&self) -> &Matrix {
        &self.pinv
    }

    /// `A^+ A`.
    pub fn projector(&self) -> &Matrix {
        &self.projector
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }
}

/// Coupling whose pushforwards `(A x, A y)` are maximally coupled Gaussians in
/// the latent space. With `A` invertible this is [`reflection_coupling`].
pub fn projected_reflection_coupling(
    proj: &Projection,
    m_p: &[f64],
    m_q: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
) -> Result<CouplingOutcome> {
    check_inputs(m_p, m_q, sigma, z)?;
    if proj.matrix().cols() != m_p.len() {
        return Err(Error::arg("projection width does not match the state dimension"));
    }
    let delta = scaled_gap(m_p, m_q, sigma);
    let dir = proj.projector().matvec(&delta);
    directed_coupling(m_p, m_q, sigma, z, u, &delta, &dir, 1.0)
}

/// Nonlinear variant with `d* = dec(enc(delta))`.
pub fn encoder_reflection_coupling<E, D>(
    enc: E,
    dec: D,
    m_p: &[f64],
    m_q: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
) -> Result<CouplingOutcome>
where
    E: Fn(&[f64]) -> Vec<f64>,
    D: Fn(&[f64]) -> Vec<f64>,
{
    check_inputs(m_p, m_q, sigma, z)?;
    let delta = scaled_gap(m_p, m_q, sigma);
    let dir = dec(&enc(&delta));
    if dir.len() != delta.len() || !all_finite(&dir) {
        return Err(Error::numeric("decoded direction is not a finite vector of the state dimension"));
    }
    directed_coupling(m_p, m_q, sigma, z, u, &delta, &dir, 1.0)
}

/// `||N(m_p, sigma^2) - N(m_q, sigma^2)||_TV = 2 Phi(||m_p - m_q|| / (2 sigma)) - 1`.
pub fn gaussian_tv(m_p: &[f64], m_q: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::arg("gaussian_tv needs sigma > 0"));
    }
    if m_p.len() != m_q.len() {
        return Err(Error::arg("mean dimensions differ"));
    }
    let gap = norm(&scaled_gap(m_p, m_q, sigma));
    Ok(libm::erf(gap / (2.0 * core::f64::consts::SQRT_2)))
}

/// Coefficient `C` with `E[Y] = m_q + C (m_p - m_q)` for the tempered
/// coupling, as a function of `||delta||` and `tau`. `C = 0` at `tau = 1`,
/// `C < 0` for `tau < 1`, `C > 0` for `tau > 1`, `C -> 1` as `tau -> inf`.
pub fn tempered_mean_coefficient(delta_norm: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::arg("temperature must be positive"));
    }
    if !(delta_norm > 0.0) {
        return Ok(0.0);
    }
    let dn = delta_norm;
    // Accept for z_e <= -dn/2; above, the ratio exp(-(dn z_e + dn^2/2)/tau)
    // tilts phi into a shifted normal with weight e.
    let c = dn * (1.0 / tau - 0.5);
    let e = libm::exp(dn * dn * (1.0 - tau) / (2.0 * tau * tau));
    let below = normal_cdf(-dn / 2.0) - 2.0 / dn * normal_pdf(dn / 2.0);
    let above = e * ((1.0 - 2.0 / tau) * normal_cdf(-c) + 2.0 / dn * normal_pdf(c));
    Ok(below + above)
}

/// Entropy used by the typical-acceptance rule, `(d/2)(1 + log(2 pi) + sigma^2)`.
pub fn typical_entropy(dim: usize, sigma: f64) -> f64 {
    0.5 * dim as f64 * (1.0 + libm::log(2.0 * core::f64::consts::PI) + sigma * sigma)
}

/// Typical-acceptance probability
/// `a(x) = min(1, max(q(x) / kappa, q(x) exp(H(q)) / delta))`.
pub fn typical_acceptance_prob(x: &[f64], q: &GaussianKernel, kappa: f64, delta: f64) -> Result<f64> {
    if !(kappa > 0.0 && delta > 0.0) {
        return Err(Error::arg("kappa and delta must be positive"));
    }
    if q.is_deterministic() {
        return Err(Error::arg("typical acceptance needs a kernel with sigma > 0"));
    }
    if x.len() != q.dim() {
        return Err(Error::arg("point dimension mismatch"));
    }
    let log_q = q.log_density(x);
    let h = typical_entropy(q.dim(), q.sigma);
    let log_a = (log_q - libm::log(kappa)).max(log_q + h - libm::log(delta));
    Ok(libm::exp(log_a.min(0.0)))
}

/// Accept iff `u <= a(x)`.
pub fn typical_acceptance(x: &[f64], q: &GaussianKernel, kappa: f64, delta: f64, u: f64) -> Result<bool> {
    Ok(u <= typical_acceptance_prob(x, q, kappa, delta)?)
}

/// Typical acceptance as a verification rule: keep the draft `x` when
/// `u <= a(x)` under `q = N(m_q, sigma^2 Id)`, otherwise return the reflected
/// target draw. Not a coupling, so `y` is not exactly `q`-distributed.
pub fn typical_verify(
    m_p: &[f64],
    m_q: &[f64],
    sigma: f64,
    z: &[f64],
    u: f64,
    kappa: f64,
    delta: f64,
) -> Result<CouplingOutcome> {
    check_inputs(m_p, m_q, sigma, z)?;
    let x: Vec<f64> = m_p.iter().zip(z).map(|(m, zi)| m + sigma * zi).collect();
    let q = GaussianKernel { mean: m_q.to_vec(), sigma };
    let a = typical_acceptance_prob(&x, &q, kappa, delta)?;
    let log_accept_ratio = libm::log(a);
    if u <= a {
        return Ok(CouplingOutcome { y: x.clone(), x, accepted: true, log_accept_ratio });
    }
    let gap = scaled_gap(m_p, m_q, sigma);
    let dd = dot(&gap, &gap);
    let c = if norm(&gap) <= DELTA_TOL { 0.0 } else { 2.0 * dot(z, &gap) / dd };
    let y = m_q.iter().zip(z).zip(&gap).map(|((m, zi), di)| m + sigma * (zi - c * di)).collect();
    Ok(CouplingOutcome { x, y, accepted: false, log_accept_ratio })
}

/// Finite probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::arg("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw from a uniform.
    pub fn sample(&self, u: f64) -> usize {
        inverse_cdf(&self.probs, u)
    }

    pub fn tv(&self, other: &DiscreteDist) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last = i;
        acc += w;
        if target < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteOutcome {
    pub x: usize,
    pub y: usize,
    pub accepted: bool,
    pub log_accept_ratio: f64,
}

/// Adjusted rejection sampling for finite alphabets: accept `x ~ p` with
/// probability `min(1, q(x)/p(x))`, otherwise draw from the residual
/// `r(z) ∝ max(0, q(z) - p(z))` using `u_residual`.
pub fn discrete_maximal_coupling(
    p: &DiscreteDist,
    q: &DiscreteDist,
    x: usize,
    u: f64,
    u_residual: f64,
) -> Result<DiscreteOutcome> {
    if p.len() != q.len() {
        return Err(Error::arg("distributions have different alphabets"));
    }
    let px = *p.probs.get(x).ok_or_else(|| Error::arg("symbol outside the alphabet"))?;
    if px <= 0.0 {
        return Err(Error::arg("draft symbol has zero probability under p"));
    }
    let qx = q.probs[x];
    let log_accept_ratio = libm::log(qx) - libm::log(px);
    if accept_log_ratio(u, log_accept_ratio) {
        return Ok(DiscreteOutcome { x, y: x, accepted: true, log_accept_ratio });
    }
    let residual: Vec<f64> = p.probs.iter().zip(&q.probs).map(|(a, b)| (b - a).max(0.0)).collect();
    Ok(DiscreteOutcome { x, y: inverse_cdf(&residual, u_residual), accepted: false, log_accept_ratio })
}

/// Draws from `r(x) ∝ max(0, q(x) - p(x))` by proposing from `q` and keeping
/// a proposal with probability `1 - min(1, p(x)/q(x))`. Returns the sample and
/// the number of proposals used.
pub fn naive_adjusted_rejection(
    p: &GaussianKernel,
    q: &GaussianKernel,
    rng: &mut RngStream,
    max_trials: u64,
) -> Result<(Vec<f64>, u64)> {
    if p.dim() != q.dim() {
        return Err(Error::arg("kernel dimensions differ"));
    }
    if q.is_deterministic() || p.is_deterministic() {
        return Err(Error::arg("naive rejection needs non-degenerate kernels"));
    }
    let mut x = vec![0.0; q.dim()];
    for trial in 1..=max_trials {
        for (xi, m) in x.iter_mut().zip(&q.mean) {
            *xi = m + q.sigma * rng.normal();
        }
        let log_ratio = p.log_density(&x) - q.log_density(&x);
        let keep = 1.0 - libm::exp(log_ratio.min(0.0));
        if rng.uniform() < keep {
            return Ok((x, trial));
        }
    }
    Err(Error::BudgetExceeded { trials: max_trials })
}
