//! File formats and reports: JSON-lines ensembles, TOML model configs,
//! fit JSON, CSV tables and text summaries.

pub mod config;
pub mod ensemble;
pub mod report;

use std::path::Path;

use thiserror::Error;

pub use config::{CovariateRef, DiagnosticsPlan, ModelConfig, ModelSetup, ScoreTarget};
pub use ensemble::{
    load_ensemble, network_to_record, parse_ensemble, record_to_network, serialize_ensemble, write_ensemble,
    EnsembleData, MissingSpec, NetworkRecord,
};
pub use report::{
    coefficient_table, density_table, load_params, residual_table, sd_table, significance_stars, tests_table,
    write_csv, CoefMatrix, CoefRow, FitReport, StreamInfo, Table, TestRow,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IoError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("line {line}: duplicate net_id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: dyad ({i}, {j}) out of range for n = {n}")]
    DyadOutOfRange { line: usize, i: usize, j: usize, n: usize },
    #[error("line {line}: dyad ({i}, {j}) listed as both an edge and missing")]
    Overlap { line: usize, i: usize, j: usize },
    #[error("model config: {0}")]
    Config(String),
}

impl IoError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        IoError::Io { path: path.display().to_string(), msg: e.to_string() }
    }

    /// Whether the error concerns the data file rather than the model config.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, IoError::Config(_))
    }
}
