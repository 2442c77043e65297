//! Likelihood machinery: enumeration, sampling, information and estimation.

pub mod enumerate;
pub mod information;
pub mod loglik;
pub mod mcmc;
pub mod mle;
pub mod nested;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::ModelError;
use crate::stats::StatsError;

pub use enumerate::{
    build_tables, conditional_expectation_table, enumerate_moments, enumerate_states, ConditionalRow,
    EnumerationTable, FisherDecomposition, PatternTable, StateHistogram, DEFAULT_ENUM_CAP,
};
pub use information::{ensemble_information, information_blocks, InfoMode};
pub use loglik::{information_criteria, loglik_at, LogLik};
pub use mcmc::{mcmc_sample, Chain, SamplerConfig, StatDraws};
pub use mle::{boundary_check, fit_mle, mple, BoundaryHit, FitMethod, FitOptions, FitResult};
pub use nested::{nested_sample, NestedPlan, NestedSample};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InferenceError {
    #[error("{dyads} dyads to enumerate exceeds the cap of {cap}")]
    EnumerationCap { dyads: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (score norm {score_norm:.3e})")]
    NonConvergence { iterations: usize, score_norm: f64, last: Vec<f64> },
    #[error("infinite MLE: `{coordinate}` sits on the {direction} boundary of its observable range")]
    InfiniteMle { coordinate: String, direction: &'static str },
    #[error("information matrix is singular at the estimate: {0}")]
    Nonidentifiable(String),
    #[error("invalid options: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Mean and covariance of the statistics, exact or simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub conditional: bool,
    /// Zero when exact.
    pub mcse: DVector<f64>,
    /// Log normalizing constant when enumerated.
    pub log_normalizer: Option<f64>,
}

/// Settings shared by every stochastic or enumerative computation.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOptions {
    pub enum_cap: usize,
    pub sampler: SamplerConfig,
    /// Draws per network when moments are simulated.
    pub draws: usize,
    /// Replicates for simulated Fisher information.
    pub nested: NestedPlan,
    pub seed: u64,
    /// Simulate even where enumeration would be possible.
    pub force_mcmc: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            enum_cap: DEFAULT_ENUM_CAP,
            sampler: SamplerConfig::default(),
            draws: 2000,
            nested: NestedPlan { r1: 200, r2: 20 },
            seed: 1,
            force_mcmc: false,
        }
    }
}

impl InferenceOptions {
    /// Effective enumeration cap (zero when simulation is forced).
    pub fn cap(&self) -> usize {
        if self.force_mcmc { 0 } else { self.enum_cap }
    }
}
