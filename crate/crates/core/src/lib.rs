//! Multivariate exponential-family random graph models for ensembles of
//! small networks with partially observed dyads.

pub mod cli;
pub mod diagnostics;
pub mod expr;
pub mod graph;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod stats;

pub use graph::{Dyad, Network};
pub use model::{Ensemble, NetworkCovariates, ParamMatrix};
pub use stats::{StatisticSpec, Term};
