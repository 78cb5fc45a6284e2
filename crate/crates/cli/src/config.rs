//! Experiment configuration: a TOML file with every key optional, then
//! command-line overrides on top.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use specdiff_core::coupling::Projection;
use specdiff_core::linalg::Matrix;
use specdiff_core::rng::substream;
use specdiff_core::schedule::DEFAULT_T_CLIP;
use specdiff_core::{
    CouplingConfig, CouplingVariant, DraftStrategy, GmmSpec, ReverseChain, RngStream, Schedule, ScheduleKind,
    ScoreModel, SpeculativeConfig, StepModel, StreamKey, TimeGrid,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gmm: GmmConfig,
    pub draft: DraftConfig,
    pub sampler: SamplerConfig,
    pub speculative: SpecConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub couple: CoupleConfig,
    pub analyze: AnalyzeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub d: usize,
    pub n_comp: usize,
    pub seed: u64,
    /// JSON `{d, weights, means, stds}`; overrides the random mixture.
    pub path: Option<PathBuf>,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { d: 2, n_comp: 16, seed: 0, path: None }
    }
}

/// The cheap model used by independent drafting: the target mixture with
/// jittered means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DraftConfig {
    pub mean_offset: f64,
    pub std_offset: f64,
    /// Draft evaluation cost relative to the target, `C_p / C_q`.
    pub cost: f64,
}

impl Default for DraftConfig {
    fn default() -> Self {
        Self { mean_offset: 0.1, std_offset: 0.0, cost: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub eps: f64,
    pub t_clip: f64,
    pub schedule: String,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: 200, eps: 0.25, t_clip: DEFAULT_T_CLIP, schedule: "linear".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecConfig {
    pub strategy: String,
    pub lookahead: usize,
    pub tau: f64,
    pub coupling: String,
    pub kappa: f64,
    pub delta: f64,
    pub picard_iterations: usize,
    pub mixture: Vec<String>,
    /// Uniform when empty.
    pub mixture_weights: Vec<f64>,
}

impl Default for SpecConfig {
    fn default() -> Self {
        Self {
            strategy: "frozen".into(),
            lookahead: 10,
            tau: 1.0,
            coupling: "reflection".into(),
            kappa: 1.0,
            delta: 1.0,
            picard_iterations: 2,
            mixture: vec!["frozen".into(), "independent".into()],
            mixture_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_chains: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { n_chains: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub values: Vec<f64>,
    pub strategies: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: "eps".into(),
            values: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            strategies: vec!["frozen".into(), "independent".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleConfig {
    pub m_p: Vec<f64>,
    pub m_q: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
    pub variant: String,
    pub n_mc: u64,
    /// Runs of the naive rejection baseline.
    pub n_naive: u64,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            m_p: vec![0.5],
            m_q: vec![1.5],
            sigma: 0.5,
            tau: 1.0,
            variant: "reflection".into(),
            n_mc: 1_000_000,
            n_naive: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub c_p: f64,
    pub c_q: f64,
    pub alphas: Vec<f64>,
    /// Grid times at which the acceptance bound is evaluated.
    pub bound_times: Vec<f64>,
    pub bound_mc: usize,
    pub tail_k_max: usize,
    pub tail_mc: u64,
    pub overlap_sigma1: f64,
    pub overlap_sigma2: f64,
    pub overlap_d_max: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            c_p: 0.0,
            c_q: 1.0,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0],
            bound_times: vec![0.1, 0.5, 0.9],
            bound_mc: 10_000,
            tail_k_max: 50,
            tail_mc: 10_000,
            overlap_sigma1: 0.2,
            overlap_sigma2: 0.1,
            overlap_d_max: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.gmm.path.is_none() && (self.gmm.d == 0 || self.gmm.n_comp == 0) {
            return bad("gmm.d and gmm.n_comp must be positive".into());
        }
        if let Some(p) = &self.gmm.path {
            if !p.exists() {
                return bad(format!("gmm.path {} does not exist", p.display()));
            }
        }
        if self.sampler.steps == 0 {
            return bad("sampler.steps must be at least 1".into());
        }
        if !(self.sampler.eps >= 0.0) {
            return bad("sampler.eps must be non-negative".into());
        }
        if !(self.sampler.t_clip > 0.0 && self.sampler.t_clip < 1.0) {
            return bad("sampler.t_clip must lie in (0, 1)".into());
        }
        ScheduleKind::from_name(&self.sampler.schedule)?;
        if self.run.n_chains == 0 {
            return bad("run.n_chains must be at least 1".into());
        }
        if self.draft.mean_offset < 0.0 || !(self.draft.cost >= 0.0) {
            return bad("draft.mean_offset and draft.cost must be non-negative".into());
        }
        self.speculative_config()?.validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> CliResult<Schedule> {
        Ok(Schedule::new(ScheduleKind::from_name(&self.sampler.schedule)?, self.sampler.t_clip)?)
    }

    pub fn gmm_spec(&self) -> CliResult<GmmSpec> {
        match &self.gmm.path {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.clone(), source })?;
                let spec: GmmSpec =
                    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                spec.validate()?;
                Ok(spec)
            }
            None => {
                let mut rng = RngStream::new(StreamKey::new(self.gmm.seed, 0, 0, substream::AUX));
                Ok(GmmSpec::random(self.gmm.d, self.gmm.n_comp, &mut rng)?)
            }
        }
    }

    /// Target chain and the perturbed draft chain on the same grid.
    pub fn models(&self) -> CliResult<Models> {
        let gmm = self.gmm_spec()?;
        let schedule = self.schedule()?;
        let grid = TimeGrid::new(self.sampler.steps, self.sampler.t_clip)?;
        let mut rng = RngStream::new(StreamKey::new(self.gmm.seed, 1, 0, substream::AUX));
        let draft = ScoreModel::perturbed(&gmm, self.draft.mean_offset, self.draft.std_offset, &mut rng)?;
        Ok(Models {
            target: Arc::new(ReverseChain::new(ScoreModel::exact(gmm), schedule, grid.clone())),
            draft: Arc::new(ReverseChain::new(draft, schedule, grid)),
        })
    }

    pub fn coupling_variant(&self, name: &str, d: usize) -> CliResult<CouplingVariant> {
        let s = &self.speculative;
        match name {
            "reflection" => Ok(CouplingVariant::Reflection),
            "typical" => Ok(CouplingVariant::Typical { kappa: s.kappa, delta: s.delta }),
            // identity projection: an exact reflection written in projector form
            "projected" => Ok(CouplingVariant::Projected(Arc::new(Projection::new(Matrix::identity(d))?))),
            other => Err(CliError::config(format!("unknown coupling variant {other:?}"))),
        }
    }

    pub fn coupling_config(&self) -> CliResult<CouplingConfig> {
        let d = self.dim()?;
        Ok(CouplingConfig { variant: self.coupling_variant(&self.speculative.coupling, d)?, tau: self.speculative.tau })
    }

    pub fn speculative_config(&self) -> CliResult<SpeculativeConfig> {
        Ok(SpeculativeConfig {
            lookahead: self.speculative.lookahead,
            eps: self.sampler.eps,
            coupling: self.coupling_config()?,
        })
    }

    pub fn dim(&self) -> CliResult<usize> {
        match &self.gmm.path {
            Some(_) => Ok(self.gmm_spec()?.d),
            None => Ok(self.gmm.d),
        }
    }

    pub fn strategy(&self, name: &str, models: &Models) -> CliResult<DraftStrategy> {
        let s = &self.speculative;
        let draft: Arc<dyn StepModel> = models.draft.clone();
        match name {
            "frozen" => Ok(DraftStrategy::frozen()),
            "independent" => Ok(DraftStrategy::independent(draft, self.draft.cost)),
            "picard" => Ok(DraftStrategy::picard(s.picard_iterations)?),
            "mixture" => {
                let parts = s
                    .mixture
                    .iter()
                    .map(|n| match n.as_str() {
                        "mixture" => Err(CliError::config("mixtures cannot nest")),
                        other => self.strategy(other, models),
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                let weights = (!s.mixture_weights.is_empty()).then(|| s.mixture_weights.clone());
                Ok(DraftStrategy::mixture(parts, weights)?)
            }
            other => Err(CliError::config(format!("unknown drafting strategy {other:?}"))),
        }
    }
}

pub struct Models {
    pub target: Arc<ReverseChain>,
    pub draft: Arc<ReverseChain>,
}

/// Values a command line may override. `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<u64>,
    pub steps: Option<usize>,
    pub eps: Option<f64>,
    pub lookahead: Option<usize>,
    pub tau: Option<f64>,
    pub strategy: Option<String>,
    pub coupling: Option<String>,
    pub dim: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.chains {
            cfg.run.n_chains = v;
        }
        if let Some(v) = self.steps {
            cfg.sampler.steps = v;
        }
        if let Some(v) = self.eps {
            cfg.sampler.eps = v;
        }
        if let Some(v) = self.lookahead {
            cfg.speculative.lookahead = v;
        }
        if let Some(v) = self.tau {
            cfg.speculative.tau = v;
            cfg.couple.tau = v;
        }
        if let Some(v) = &self.strategy {
            cfg.speculative.strategy.clone_from(v);
        }
        if let Some(v) = &self.coupling {
            cfg.speculative.coupling.clone_from(v);
            cfg.couple.variant.clone_from(v);
        }
        if let Some(v) = self.dim {
            cfg.gmm.d = v;
        }
        if let Some(v) = &self.out {
            cfg.output.dir.clone_from(v);
        }
    }
}
