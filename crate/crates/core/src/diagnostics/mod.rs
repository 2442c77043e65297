//! Goodness-of-fit and identifiability diagnostics for fitted ensembles.

pub mod identify;
pub mod regression;
pub mod residuals;
pub mod score;

use thiserror::Error;

use crate::inference::InferenceError;
use crate::model::ModelError;
use crate::stats::StatsError;

pub use identify::{check_identifiability, DEFAULT_REL_TOL, IdentifiabilityCause, IdentifiabilityReport, NullDirection};
pub use regression::{heterogeneity_sd, residual_regression, size_anova, AnovaReport, SdRow, WaldReport};
pub use residuals::{
    density_error_summary, nested_draws, pearson_residual, variance_direct, variance_direct_adjusted,
    variance_total, DensityCell, Measure, NestedSimPlan, ResidualRecord, Scope, TargetStatistic,
    VarianceEstimator,
};
pub use score::{quantile_p, score_test_dataset, score_test_omnibus, OmnibusReport, ScoreTestReport};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("invalid simulation plan: {0}")]
    Plan(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("target `{target}` depends on partially observed network `{net}`")]
    UnsupportedStatistic { target: String, net: String },
    #[error("simulated covariance is singular: {0}")]
    SingularCovariance(String),
    #[error("not enough data: {0}")]
    TooFew(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
