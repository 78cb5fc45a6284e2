//! Draft windows.
//!
//! A window starting at state `y_n` proposes `y~_{n+1..n_L}` with
//! `n_L = min(n + L, K)`. The draft state for step `k` is
//! `m^p_k + sigma_{k-1} z_k`, where `z_k` is the chain's noise draw for
//! step `k`; the verifier later reuses the same `z_k`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::models::StepModel;
use crate::rng::ChainStreams;

/// Additive correction to the frozen drift, called as
/// `c(t_n, t_k, y_n, y_k, out)`.
pub type Correction = Arc<dyn Fn(f64, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum DraftStrategy {
    /// Reuse the target drift at the window start for every step.
    Frozen { correction: Option<Correction> },
    /// Run a cheaper model. `cost` is its evaluation cost relative to the
    /// target.
    Independent { model: Arc<dyn StepModel>, cost: f64 },
    /// Convex combination of component kernel means.
    Mixture { components: Vec<DraftStrategy>, weights: Vec<f64> },
    /// `iterations - 1` deterministic Picard sweeps from the constant path,
    /// then one stochastic step per position.
    Picard { iterations: usize },
}

impl fmt::Debug for DraftStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Frozen { correction } => f.debug_struct("Frozen").field("corrected", &correction.is_some()).finish(),
            Self::Independent { cost, .. } => f.debug_struct("Independent").field("cost", cost).finish(),
            Self::Mixture { components, weights } => {
                f.debug_struct("Mixture").field("components", components).field("weights", weights).finish()
            }
            Self::Picard { iterations } => f.debug_struct("Picard").field("iterations", iterations).finish(),
        }
    }
}

impl DraftStrategy {
    pub fn frozen() -> Self {
        Self::Frozen { correction: None }
    }

    pub fn independent(model: Arc<dyn StepModel>, cost: f64) -> Self {
        Self::Independent { model, cost }
    }

    /// Equal weights when `weights` is `None`.
    pub fn mixture(components: Vec<DraftStrategy>, weights: Option<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::arg("mixture needs at least one component"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / components.len() as f64; components.len()]);
        let s = Self::Mixture { components, weights };
        s.validate()?;
        Ok(s)
    }

    pub fn picard(iterations: usize) -> Result<Self> {
        let s = Self::Picard { iterations };
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Frozen { .. } => "frozen",
            Self::Independent { .. } => "independent",
            Self::Mixture { .. } => "mixture",
            Self::Picard { .. } => "picard",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Frozen { .. } => Ok(()),
            Self::Independent { cost, .. } => {
                if !(*cost >= 0.0) {
                    return Err(Error::arg("draft cost must be non-negative"));
                }
                Ok(())
            }
            Self::Mixture { components, weights } => {
                if components.len() != weights.len() || components.is_empty() {
                    return Err(Error::arg("mixture needs one weight per component"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::arg("mixture weights must be non-negative and sum to 1"));
                }
                components.iter().try_for_each(DraftStrategy::validate)
            }
            Self::Picard { iterations } => {
                if *iterations == 0 {
                    return Err(Error::arg("picard needs at least one iteration"));
                }
                Ok(())
            }
        }
    }

    /// Draft a window of up to `lookahead` states after `y_n`.
    pub fn draft(
        &self,
        model: &dyn StepModel,
        n: usize,
        y_n: &[f64],
        lookahead: usize,
        eps: f64,
        streams: &ChainStreams,
    ) -> Result<DraftWindow> {
        let k_total = model.steps();
        if n >= k_total {
            return Err(Error::arg("window start must be before the last step"));
        }
        if lookahead == 0 {
            return Err(Error::arg("lookahead must be at least 1"));
        }
        if y_n.len() != model.dim() {
            return Err(Error::arg("state dimension does not match the model"));
        }
        let len = lookahead.min(k_total - n);
        let mut cost = DraftCost::default();
        let prepared = self.prepare(model, n, y_n, len, eps, &mut cost)?;

        let d = y_n.len();
        let mut window = DraftWindow {
            start: n,
            states: Vec::with_capacity(len),
            kernel_means: Vec::with_capacity(len),
            sigmas: Vec::with_capacity(len),
            noises: Vec::with_capacity(len),
            target_evals: cost.target_evals,
            extra_rounds: cost.extra_rounds,
            draft_evals: 0,
            first_target_mean: cost.first_target_mean.take(),
        };
        let mut prev = y_n.to_vec();
        for j in 0..len {
            let k = n + 1 + j;
            let mean = prepared.mean(model, j, &prev, eps, &mut cost)?;
            let sigma = model.step_sigma(k - 1, eps);
            let mut z = vec![0.0; d];
            streams.noise(k, &mut z);
            let state: Vec<f64> = mean.iter().zip(&z).map(|(m, zi)| m + sigma * zi).collect();
            window.kernel_means.push(mean);
            window.sigmas.push(sigma);
            window.noises.push(z);
            prev.clone_from(&state);
            window.states.push(state);
        }
        window.draft_evals = cost.draft_evals;
        Ok(window)
    }

    fn prepare<'a>(
        &'a self,
        model: &dyn StepModel,
        n: usize,
        y_n: &[f64],
        len: usize,
        eps: f64,
        cost: &mut DraftCost,
    ) -> Result<Prepared<'a>> {
        let gamma = model.gamma();
        match self {
            Self::Frozen { correction } => {
                let mut drift = vec![0.0; y_n.len()];
                model.drift(n, y_n, eps, &mut drift)?;
                cost.target_evals += 1;
                cost.offer_first_mean(y_n, &drift, gamma);
                Ok(Prepared::Frozen { drift, correction: correction.as_ref(), n, y_n: y_n.to_vec() })
            }
            Self::Independent { model: draft, .. } => {
                if draft.steps() != model.steps() || draft.dim() != model.dim() {
                    return Err(Error::arg("draft model must share the target grid and dimension"));
                }
                Ok(Prepared::Independent { draft: draft.as_ref(), n })
            }
            Self::Mixture { components, weights } => {
                let parts =
                    components.iter().map(|c| c.prepare(model, n, y_n, len, eps, cost)).collect::<Result<Vec<_>>>()?;
                Ok(Prepared::Mixture { parts, weights })
            }
            Self::Picard { iterations } => {
                let means = picard_means(model, n, y_n, len, *iterations, eps)?;
                cost.target_evals += (*iterations * len) as u64;
                cost.extra_rounds = cost.extra_rounds.max(*iterations as u64 - 1);
                if cost.first_target_mean.is_none() {
                    cost.first_target_mean = Some(means[0].clone());
                }
                Ok(Prepared::Picard(means))
            }
        }
    }
}

/// Kernel means of the Picard draft: `m_k = F_{k-1} + gamma b_{t_{k-1}}(F_{k-1})`
/// where `F` is the `(iterations - 1)`-th deterministic Picard iterate.
pub fn picard_means(
    model: &dyn StepModel,
    n: usize,
    y_n: &[f64],
    len: usize,
    iterations: usize,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    if iterations == 0 {
        return Err(Error::arg("picard needs at least one iteration"));
    }
    let gamma = model.gamma();
    let d = y_n.len();
    let mut path = vec![y_n.to_vec(); len];
    let mut b = vec![0.0; d];
    for _ in 1..iterations {
        let mut next = Vec::with_capacity(len);
        next.push(y_n.to_vec());
        for (j, f) in path.iter().enumerate().take(len - 1) {
            model.drift(n + j, f, 0.0, &mut b)?;
            next.push(f.iter().zip(&b).map(|(x, bi)| x + gamma * bi).collect());
        }
        path = next;
    }
    path.iter()
        .enumerate()
        .map(|(j, f)| {
            model.drift(n + j, f, eps, &mut b)?;
            Ok(f.iter().zip(&b).map(|(x, bi)| x + gamma * bi).collect())
        })
        .collect()
}

#[derive(Default)]
struct DraftCost {
    target_evals: u64,
    extra_rounds: u64,
    draft_evals: u64,
    first_target_mean: Option<Vec<f64>>,
}

impl DraftCost {
    fn offer_first_mean(&mut self, y_n: &[f64], drift: &[f64], gamma: f64) {
        if self.first_target_mean.is_none() {
            self.first_target_mean = Some(y_n.iter().zip(drift).map(|(y, b)| y + gamma * b).collect());
        }
    }
}

enum Prepared<'a> {
    Frozen { drift: Vec<f64>, correction: Option<&'a Correction>, n: usize, y_n: Vec<f64> },
    Independent { draft: &'a dyn StepModel, n: usize },
    Mixture { parts: Vec<Prepared<'a>>, weights: &'a [f64] },
    Picard(Vec<Vec<f64>>),
}

impl Prepared<'_> {
    /// Kernel mean of window position `j` (step `n + 1 + j`) given the
    /// previous drafted state.
    fn mean(&self, target: &dyn StepModel, j: usize, prev: &[f64], eps: f64, cost: &mut DraftCost) -> Result<Vec<f64>> {
        let gamma = target.gamma();
        match self {
            Prepared::Frozen { drift, correction, n, y_n } => match correction {
                None => Ok(prev.iter().zip(drift).map(|(y, b)| y + gamma * b).collect()),
                Some(c) => {
                    let mut extra = vec![0.0; prev.len()];
                    c(target.time(*n), target.time(n + j), y_n, prev, &mut extra);
                    Ok(prev.iter().zip(drift).zip(&extra).map(|((y, b), e)| y + gamma * (b + e)).collect())
                }
            },
            Prepared::Independent { draft, n } => {
                let mut b = vec![0.0; prev.len()];
                draft.drift(n + j, prev, eps, &mut b)?;
                cost.draft_evals += 1;
                Ok(prev.iter().zip(&b).map(|(y, bi)| y + gamma * bi).collect())
            }
            Prepared::Mixture { parts, weights } => {
                let mut acc = vec![0.0; prev.len()];
                for (part, w) in parts.iter().zip(weights.iter()) {
                    let m = part.mean(target, j, prev, eps, cost)?;
                    for (a, mi) in acc.iter_mut().zip(&m) {
                        *a += w * mi;
                    }
                }
                Ok(acc)
            }
            Prepared::Picard(means) => Ok(means[j].clone()),
        }
    }
}

/// Proposed states for one speculative window.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftWindow {
    /// Index `n` of the state the window starts from.
    pub start: usize,
    /// `y~_{n+1..n_L}`.
    pub states: Vec<Vec<f64>>,
    /// Draft kernel mean that produced each state.
    pub kernel_means: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
    /// Standard normal draws with `states[j] = kernel_means[j] + sigmas[j] * noises[j]`.
    pub noises: Vec<Vec<f64>>,
    /// Target drift evaluations spent while drafting.
    pub target_evals: u64,
    /// Sequential target rounds drafting needs on top of verification.
    pub extra_rounds: u64,
    pub draft_evals: u64,
    /// Target kernel mean for step `n + 1` when drafting already computed it.
    pub first_target_mean: Option<Vec<f64>>,
}

impl DraftWindow {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `n_L`.
    pub fn end(&self) -> usize {
        self.start + self.states.len()
    }
}

pub fn draft_frozen(
    model: &dyn StepModel,
    n: usize,
    y_n: &[f64],
    lookahead: usize,
    eps: f64,
    streams: &ChainStreams,
) -> Result<DraftWindow> {
    DraftStrategy::frozen().draft(model, n, y_n, lookahead, eps, streams)
}

pub fn draft_independent(
    target: &dyn StepModel,
    draft: Arc<dyn StepModel>,
    n: usize,
    y_n: &[f64],
    lookahead: usize,
    eps: f64,
    streams: &ChainStreams,
) -> Result<DraftWindow> {
    DraftStrategy::independent(draft, 0.0).draft(target, n, y_n, lookahead, eps, streams)
}

pub fn draft_picard(
    model: &dyn StepModel,
    n: usize,
    y_n: &[f64],
    lookahead: usize,
    iterations: usize,
    eps: f64,
    streams: &ChainStreams,
) -> Result<DraftWindow> {
    DraftStrategy::picard(iterations)?.draft(model, n, y_n, lookahead, eps, streams)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Linear test chain `b(x) = a x`, constant diffusion `g`.
    #[derive(Debug, Clone)]
    pub struct LinearChain {
        pub dim: usize,
        pub steps: usize,
        pub a: f64,
        pub g: f64,
    }

    impl StepModel for LinearChain {
        fn dim(&self) -> usize {
            self.dim
        }
        fn steps(&self) -> usize {
            self.steps
        }
        fn gamma(&self) -> f64 {
            1.0 / self.steps as f64
        }
        fn drift(&self, _k: usize, x: &[f64], _eps: f64, out: &mut [f64]) -> Result<()> {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = self.a * xi;
            }
            Ok(())
        }
        fn diffusion(&self, _k: usize) -> f64 {
            self.g
        }
    }
}
