//! Analytic data distributions and the Gaussian transition kernels of the
//! reverse-time chain.
//!
//! A Gaussian mixture pushed through the interpolant stays a Gaussian mixture:
//! `p_t = sum_i w_i N(alpha_t mu_i, (alpha_t^2 s_i^2 + sigma_t^2) Id)`, so its
//! score, log-density and velocity are available in closed form.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::rng::RngStream;
use crate::schedule::{Coefficients, Schedule, TimeGrid};
use crate::special::{gaussian_log_density, log_sum_exp};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmSpec {
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
}

impl GmmSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<f64>) -> Result<Self> {
        let d = means.first().map_or(0, Vec::len);
        let spec = Self { d, weights, means, stds };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 || self.d == 0 {
            return Err(Error::arg("mixture needs at least one component and d >= 1"));
        }
        if self.means.len() != n || self.stds.len() != n {
            return Err(Error::arg("weights, means and stds must have equal length"));
        }
        if self.means.iter().any(|m| m.len() != self.d || !all_finite(m)) {
            return Err(Error::arg(format!("every mean must be a finite vector of length {}", self.d)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::arg("mixture weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("mixture weights sum to {total}, not 1")));
        }
        if self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::arg("component stds must be positive and finite"));
        }
        Ok(())
    }

    /// Random mixture: means uniform on `[-2, 2]^d`, stds uniform on
    /// `[0.1, 0.2]`, equal weights.
    pub fn random(d: usize, n_comp: usize, rng: &mut RngStream) -> Result<Self> {
        if d == 0 || n_comp == 0 {
            return Err(Error::arg("random mixture needs d >= 1 and n_comp >= 1"));
        }
        let means = (0..n_comp).map(|_| (0..d).map(|_| -2.0 + 4.0 * rng.uniform()).collect()).collect();
        let stds = (0..n_comp).map(|_| 0.1 + 0.1 * rng.uniform()).collect();
        let weights = vec![1.0 / n_comp as f64; n_comp];
        let mut spec = Self { d, weights, means, stds };
        renormalize(&mut spec.weights);
        spec.validate()?;
        Ok(spec)
    }

    /// Copy with means jittered by `N(0, mean_std^2)` noise and stds shifted
    /// by `std_offset` (floored at a small positive value).
    pub fn perturbed(&self, mean_std: f64, std_offset: f64, rng: &mut RngStream) -> Result<Self> {
        if !(mean_std >= 0.0) {
            return Err(Error::arg("perturbation std must be non-negative"));
        }
        let means = self.means.iter().map(|m| m.iter().map(|v| v + mean_std * rng.normal()).collect()).collect();
        let stds = self.stds.iter().map(|s| (s + std_offset).max(1e-6)).collect();
        let spec = Self { d: self.d, weights: self.weights.clone(), means, stds };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_comp(&self) -> usize {
        self.weights.len()
    }

    fn component_variance(&self, i: usize, c: &Coefficients) -> f64 {
        c.alpha * c.alpha * self.stds[i] * self.stds[i] + c.sigma * c.sigma
    }

    fn component_log_terms(&self, c: &Coefficients, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        let mut centre = vec![0.0; self.d];
        for i in 0..self.n_comp() {
            for (dst, m) in centre.iter_mut().zip(&self.means[i]) {
                *dst = c.alpha * m;
            }
            let std = libm::sqrt(self.component_variance(i, c));
            buf.push(libm::log(self.weights[i]) + gaussian_log_density(x, &centre, std));
        }
    }

    /// Log-density of the noised marginal with coefficients `c`.
    pub fn log_density_at(&self, c: &Coefficients, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut terms = Vec::with_capacity(self.n_comp());
        self.component_log_terms(c, x, &mut terms);
        Ok(log_sum_exp(&terms))
    }

    /// Posterior component probabilities given `X_t = x`.
    pub fn responsibilities(&self, c: &Coefficients, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut terms = Vec::with_capacity(self.n_comp());
        self.component_log_terms(c, x, &mut terms);
        let lse = log_sum_exp(&terms);
        Ok(terms.iter().map(|t| libm::exp(t - lse)).collect())
    }

    /// Score of the noised marginal with coefficients `c`.
    pub fn score_at(&self, c: &Coefficients, x: &[f64], out: &mut [f64]) -> Result<()> {
        let resp = self.responsibilities(c, x)?;
        out.fill(0.0);
        for (i, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let v = self.component_variance(i, c);
            for ((o, xi), m) in out.iter_mut().zip(x).zip(&self.means[i]) {
                *o -= r * (xi - c.alpha * m) / v;
            }
        }
        Ok(())
    }

    /// Exact draws of `X_t = alpha_t X_0 + sigma_t X_1`.
    pub fn sample_marginal(&self, c: &Coefficients, rng: &mut RngStream, out: &mut [f64]) {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut comp = self.n_comp() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u <= acc {
                comp = i;
                break;
            }
        }
        let s = self.stds[comp];
        for (o, m) in out.iter_mut().zip(&self.means[comp]) {
            let x0 = m + s * rng.normal();
            *o = c.alpha * x0 + c.sigma * rng.normal();
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::arg(format!("point has dimension {}, expected {}", x.len(), self.d)));
        }
        if !all_finite(x) {
            return Err(Error::numeric("non-finite point"));
        }
        Ok(())
    }
}

fn renormalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for v in w {
        *v /= total;
    }
}

/// User-supplied score `s(coeffs, t, x) -> out`.
pub type ScoreFnPtr = Arc<dyn Fn(&Coefficients, f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    ExactGmm,
    PerturbedGmm,
    Custom,
}

/// A score model `s_t(x)`: an exact mixture, a perturbed (draft-quality)
/// mixture, or a user callback.
#[derive(Clone)]
pub enum ScoreModel {
    Gmm { kind: ScoreKind, gmm: GmmSpec },
    Custom { dim: usize, func: ScoreFnPtr },
}

impl fmt::Debug for ScoreModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreModel::Gmm { kind, gmm } => f.debug_struct("Gmm").field("kind", kind).field("gmm", gmm).finish(),
            ScoreModel::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl ScoreModel {
    pub fn exact(gmm: GmmSpec) -> Self {
        ScoreModel::Gmm { kind: ScoreKind::ExactGmm, gmm }
    }

    /// Draft-quality model: `gmm` with jittered component means.
    pub fn perturbed(gmm: &GmmSpec, mean_std: f64, std_offset: f64, rng: &mut RngStream) -> Result<Self> {
        Ok(ScoreModel::Gmm { kind: ScoreKind::PerturbedGmm, gmm: gmm.perturbed(mean_std, std_offset, rng)? })
    }

    pub fn custom(dim: usize, func: ScoreFnPtr) -> Self {
        ScoreModel::Custom { dim, func }
    }

    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreModel::Gmm { kind, .. } => *kind,
            ScoreModel::Custom { .. } => ScoreKind::Custom,
        }
    }

    pub fn gmm(&self) -> Option<&GmmSpec> {
        match self {
            ScoreModel::Gmm { gmm, .. } => Some(gmm),
            ScoreModel::Custom { .. } => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Gmm { gmm, .. } => gmm.d,
            ScoreModel::Custom { dim, .. } => *dim,
        }
    }

    /// `grad log p_t(x)`.
    pub fn score(&self, schedule: &Schedule, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let c = schedule.eval(t)?;
        match self {
            ScoreModel::Gmm { gmm, .. } => gmm.score_at(&c, x, out),
            ScoreModel::Custom { dim, func } => {
                if x.len() != *dim {
                    return Err(Error::arg("point dimension mismatch"));
                }
                if !all_finite(x) {
                    return Err(Error::numeric("non-finite point"));
                }
                func(&c, t, x, out);
                Ok(())
            }
        }
    }

    /// `log p_t(x)`; only available for mixtures.
    pub fn log_density(&self, schedule: &Schedule, t: f64, x: &[f64]) -> Result<f64> {
        let c = schedule.eval(t)?;
        match self {
            ScoreModel::Gmm { gmm, .. } => gmm.log_density_at(&c, x),
            ScoreModel::Custom { .. } => Err(Error::arg("custom score models carry no density")),
        }
    }
}

/// `grad log p_t = (2 / g_t^2)(f_t x - v_t(x))`.
pub fn score_from_velocity(v: &[f64], x: &[f64], t: f64, schedule: &Schedule, out: &mut [f64]) -> Result<()> {
    let c = schedule.eval(t)?;
    if c.g2 <= 0.0 {
        return Err(Error::Domain { what: "score/velocity conversion needs g^2 > 0 at time", value: t });
    }
    for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
        *o = 2.0 / c.g2 * (c.f * xi - vi);
    }
    Ok(())
}

/// Inverse of [`score_from_velocity`]: `v_t(x) = f_t x - (g_t^2 / 2) s_t(x)`.
pub fn velocity_from_score(s: &[f64], x: &[f64], t: f64, schedule: &Schedule, out: &mut [f64]) -> Result<()> {
    let c = schedule.eval(t)?;
    if c.g2 <= 0.0 {
        return Err(Error::Domain { what: "score/velocity conversion needs g^2 > 0 at time", value: t });
    }
    for ((o, si), xi) in out.iter_mut().zip(s).zip(x) {
        *o = c.f * xi - 0.5 * c.g2 * si;
    }
    Ok(())
}

/// Reverse-time drift `b(x) = -f_u x + ((1 + eps^2) / 2) g_u^2 s_u(x)` at
/// forward time `u` (already clamped by the caller).
pub fn drift_at(score: &ScoreModel, schedule: &Schedule, u: f64, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
    let c = schedule.eval(u)?;
    score.score(schedule, u, x, out)?;
    let w = 0.5 * (1.0 + eps * eps) * c.g2;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = -c.f * xi + w * *o;
    }
    if !all_finite(out) {
        return Err(Error::numeric("drift is not finite"));
    }
    Ok(())
}

/// Reverse drift `b_t(x)` at reverse time `t`; coefficients are queried at
/// `1 - t`, clamped to the schedule's cutoff.
pub fn drift(score: &ScoreModel, schedule: &Schedule, t: f64, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
    drift_at(score, schedule, schedule.clamp(1.0 - t), x, eps, out)
}

/// One Gaussian step `N(mean, sigma^2 Id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if !all_finite(&mean) || !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::numeric("kernel mean and sigma must be finite, sigma >= 0"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A zero-variance kernel is a deterministic map; couplings reject it.
    pub fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        gaussian_log_density(x, &self.mean, self.sigma)
    }
}

/// Step-indexed view of a reverse chain: the only interface drafting and
/// the speculative engine need from a model.
pub trait StepModel: Send + Sync {
    fn dim(&self) -> usize;
    fn steps(&self) -> usize;
    fn gamma(&self) -> f64;
    /// Drift `b_{t_k}(x)` for churn `eps`.
    fn drift(&self, k: usize, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()>;
    /// Diffusion coefficient `g_{1 - t_k}`.
    fn diffusion(&self, k: usize) -> f64;

    /// Grid time `t_k = k gamma`.
    fn time(&self, k: usize) -> f64 {
        k as f64 * self.gamma()
    }

    /// Step std `sigma_k = sqrt(gamma) eps g_{1 - t_k}`.
    fn step_sigma(&self, k: usize, eps: f64) -> f64 {
        libm::sqrt(self.gamma()) * eps * self.diffusion(k)
    }
}

/// A score model discretized on a grid.
#[derive(Debug, Clone)]
pub struct ReverseChain {
    pub score: ScoreModel,
    pub schedule: Schedule,
    pub grid: TimeGrid,
}

impl ReverseChain {
    pub fn new(score: ScoreModel, schedule: Schedule, grid: TimeGrid) -> Self {
        Self { score, schedule, grid }
    }
}

impl StepModel for ReverseChain {
    fn dim(&self) -> usize {
        self.score.dim()
    }

    fn steps(&self) -> usize {
        self.grid.steps()
    }

    fn gamma(&self) -> f64 {
        self.grid.gamma()
    }

    fn drift(&self, k: usize, x: &[f64], eps: f64, out: &mut [f64]) -> Result<()> {
        drift_at(&self.score, &self.schedule, self.grid.reverse_time(k), x, eps, out)
    }

    fn diffusion(&self, k: usize) -> f64 {
        let u = self.grid.reverse_time(k);
        // reverse_time is always inside [0, t_clip]
        self.schedule.eval(u).map(|c| libm::sqrt(c.g2)).unwrap_or(f64::NAN)
    }
}

/// Target kernel `N(y + gamma b_{t_k}(y), (sqrt(gamma) eps g_{1-t_k})^2 Id)`.
pub fn target_kernel(model: &dyn StepModel, k: usize, y: &[f64], eps: f64) -> Result<GaussianKernel> {
    if k >= model.steps() {
        return Err(Error::arg(format!("step {k} outside 0..{}", model.steps())));
    }
    let mut b = vec![0.0; y.len()];
    model.drift(k, y, eps, &mut b)?;
    let gamma = model.gamma();
    let mean = y.iter().zip(&b).map(|(yi, bi)| yi + gamma * bi).collect();
    GaussianKernel::new(mean, model.step_sigma(k, eps))
}
