//! Noising interpolant `X_t = alpha_t X_0 + sigma_t X_1`, the coefficients
//! `f_t`, `g_t^2` of the matching forward SDE, and the uniform time grid
//! shared by target and draft chains.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default upper cutoff; `f_t` and `g_t^2` blow up as `t -> 1`.
pub const DEFAULT_T_CLIP: f64 = 1.0 - 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ScheduleKind {
    /// `alpha_t = 1 - t`, `sigma_t = t`.
    Linear,
}

impl ScheduleKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(Error::arg(alloc::format!("unknown schedule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub sigma: f64,
    pub f: f64,
    pub g2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    t_clip: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, t_clip: f64) -> Result<Self> {
        if !(t_clip > 0.0 && t_clip < 1.0) {
            return Err(Error::arg("t_clip must lie in (0, 1)"));
        }
        Ok(Self { kind, t_clip })
    }

    pub fn linear(t_clip: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, t_clip)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn t_clip(&self) -> f64 {
        self.t_clip
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(0.0..=self.t_clip).contains(&t) {
            return Err(Error::Domain { what: "schedule time", value: t });
        }
        Ok(())
    }

    /// `(alpha, sigma, f, g^2)` at `t` in `[0, t_clip]`.
    pub fn eval(&self, t: f64) -> Result<Coefficients> {
        self.check(t)?;
        Ok(match self.kind {
            ScheduleKind::Linear => {
                Coefficients { alpha: 1.0 - t, sigma: t, f: -1.0 / (1.0 - t), g2: 2.0 * t / (1.0 - t) }
            }
        })
    }

    /// Time derivatives `(d alpha/dt, d sigma/dt)`.
    pub fn rates(&self, t: f64) -> Result<(f64, f64)> {
        self.check(t)?;
        Ok(match self.kind {
            ScheduleKind::Linear => (-1.0, 1.0),
        })
    }

    /// Clamp a reverse-time query into the valid domain.
    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(0.0, self.t_clip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    gamma: f64,
    times: Vec<f64>,
    t_clip: f64,
}

impl TimeGrid {
    /// Uniform grid `t_k = k / K`.
    pub fn new(steps: usize, t_clip: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("number of steps K must be at least 1"));
        }
        if !(t_clip > 0.0 && t_clip < 1.0) {
            return Err(Error::arg("t_clip must lie in (0, 1)"));
        }
        let k = steps as f64;
        let times = (0..=steps).map(|i| i as f64 / k).collect();
        Ok(Self { steps, gamma: 1.0 / k, times, t_clip })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Forward-process time `1 - t_k` queried by reverse step `k`,
    /// clamped to `t_clip`.
    pub fn reverse_time(&self, k: usize) -> f64 {
        let t = (self.steps - k.min(self.steps)) as f64 / self.steps as f64;
        t.min(self.t_clip)
    }
}
