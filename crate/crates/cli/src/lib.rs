//! Experiment runner for speculative diffusion sampling.
//!
//! Every subcommand reads an optional TOML file, applies command-line
//! overrides and writes CSV or JSON under the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod runner;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "specdiff", version, about = "Speculative sampling for diffusion chains")]
pub struct Cli {
    /// TOML experiment file; every key is optional.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Run seed. Takes precedence over the file.
    #[arg(long, global = true, env = "SPECDIFF_SEED")]
    pub seed: Option<u64>,

    /// Maximum worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(flatten)]
    pub overrides: OverrideArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    /// Number of independent chains.
    #[arg(long, global = true)]
    pub chains: Option<u64>,
    /// Number of steps K.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Churn: 0 is the probability-flow ODE, 1 the exact reversal.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Window length L.
    #[arg(long, global = true)]
    pub lookahead: Option<usize>,
    /// Acceptance temperature; 1 is exact.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// frozen, independent, picard or mixture.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// reflection, typical or projected.
    #[arg(long, global = true)]
    pub coupling: Option<String>,
    /// Dimension of the random mixture.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Output directory.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Target and speculative runs; writes samples.csv and stats.json.
    Sample,
    /// NFE and acceptance against eps, L or d; writes sweep.csv.
    Sweep {
        /// eps, L or d.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated drafting strategies.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
    },
    /// Coupling diagnostics for one Gaussian pair; writes couple.json.
    Couple {
        /// Draft mean, comma-separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        m_p: Option<Vec<f64>>,
        /// Target mean, comma-separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        m_q: Option<Vec<f64>>,
        /// Common standard deviation.
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
        /// Number of coupled draws.
        #[arg(long)]
        n_mc: Option<u64>,
    },
    /// Cost ratio, bounds, tails and overlap curve; writes analyze.json.
    Analyze,
}

impl Cli {
    /// File values, then flags.
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let o = &self.overrides;
        Overrides {
            seed: self.seed,
            chains: o.chains,
            steps: o.steps,
            eps: o.eps,
            lookahead: o.lookahead,
            tau: o.tau,
            strategy: o.strategy.clone(),
            coupling: o.coupling.clone(),
            dim: o.dim,
            out: o.out.clone(),
        }
        .apply(&mut cfg);
        match &self.command {
            Command::Sweep { param, values, strategies } => {
                if let Some(v) = param {
                    cfg.sweep.param.clone_from(v);
                }
                if let Some(v) = values {
                    cfg.sweep.values.clone_from(v);
                }
                if let Some(v) = strategies {
                    cfg.sweep.strategies.clone_from(v);
                }
            }
            Command::Couple { m_p, m_q, sigma, n_mc } => {
                if let Some(v) = m_p {
                    cfg.couple.m_p.clone_from(v);
                }
                if let Some(v) = m_q {
                    cfg.couple.m_q.clone_from(v);
                }
                if let Some(v) = sigma {
                    cfg.couple.sigma = *v;
                }
                if let Some(v) = n_mc {
                    cfg.couple.n_mc = *v;
                }
            }
            Command::Sample | Command::Analyze => {}
        }
        Ok(cfg)
    }

    /// Runs the command and returns the files written.
    pub fn run(&self) -> CliResult<Vec<PathBuf>> {
        let cfg = self.resolve()?;
        let pool = runner::pool(self.threads)?;
        match self.command {
            Command::Sample => commands::sample::execute(&cfg, &pool),
            Command::Sweep { .. } => commands::sweep::execute(&cfg, &pool),
            Command::Couple { .. } => commands::couple::execute(&cfg, &pool),
            Command::Analyze => commands::analyze::execute(&cfg, &pool),
        }
    }
}
