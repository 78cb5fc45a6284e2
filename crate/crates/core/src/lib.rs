//! Speculative sampling for diffusion models with Gaussian transitions.
//!
//! A cheap draft proposes a window of future states, the target kernels at
//! those states are evaluated in one batch, and a reflection maximal coupling
//! accepts a prefix of the window. With the exact coupling the output chain has
//! the same law as the target chain.
//!
//! The crate is `no_std` with `alloc`. Randomness is counter based and keyed by
//! `(seed, chain, step, substream)`, so results never depend on scheduling.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod coupling;
pub mod drafting;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod schedule;
pub mod special;

pub use coupling::{CouplingOutcome, Projection};
pub use drafting::{DraftStrategy, DraftWindow};
pub use engine::{ChainResult, CouplingConfig, CouplingVariant, RunStats, SpeculativeConfig};
pub use error::{Error, Result};
pub use metrics::SampleSet;
pub use models::{GaussianKernel, GmmSpec, ReverseChain, ScoreModel, StepModel};
pub use rng::{ChainStreams, RngStream, StreamKey};
pub use schedule::{Schedule, ScheduleKind, TimeGrid};
