//! Rank checks on complete-data and Fisher information.

use nalgebra::DMatrix;

use super::DiagnosticsError;
use crate::inference::{ensemble_information, InferenceOptions, InfoMode};
use crate::linalg;
use crate::model::{Ensemble, ParamMatrix};

/// Default relative eigenvalue threshold for a near-null direction.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NullDirection {
    pub eigenvalue: f64,
    /// Unit eigenvector, largest loading positive.
    pub loadings: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifiabilityCause {
    Identified,
    /// Singular even with every dyad observed.
    CompleteDataSingular,
    /// Full rank for complete data, singular under the observation mask.
    MissingnessInduced,
}

impl IdentifiabilityCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            IdentifiabilityCause::Identified => "identified",
            IdentifiabilityCause::CompleteDataSingular => "complete-data singular",
            IdentifiabilityCause::MissingnessInduced => "missingness-induced",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    pub coordinates: Vec<String>,
    pub complete_info: DMatrix<f64>,
    pub fisher_info: DMatrix<f64>,
    pub complete_eigenvalues: Vec<f64>,
    pub fisher_eigenvalues: Vec<f64>,
    pub complete_det: f64,
    pub fisher_det: f64,
    pub complete_null: Vec<NullDirection>,
    pub fisher_null: Vec<NullDirection>,
    pub cause: IdentifiabilityCause,
    pub rel_tol: f64,
}

impl IdentifiabilityReport {
    pub fn is_identified(&self) -> bool {
        self.cause == IdentifiabilityCause::Identified
    }
}

fn null_directions(m: &DMatrix<f64>, names: &[String], rel_tol: f64) -> (Vec<f64>, Vec<NullDirection>) {
    if m.nrows() == 0 {
        return (Vec::new(), Vec::new());
    }
    let (vals, vecs) = linalg::sym_eigen(m);
    let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut null = Vec::new();
    for (c, &v) in vals.iter().enumerate() {
        if v < rel_tol * max || max == 0.0 {
            let col = vecs.column(c);
            let lead = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            null.push(NullDirection {
                eigenvalue: v,
                loadings: names.iter().cloned().zip(col.iter().map(|x| x * sign)).collect(),
            });
        }
    }
    (vals.iter().copied().collect(), null)
}

/// Compares complete-data information (every dyad treated as observed)
/// with Fisher information under the actual observation masks.
pub fn check_identifiability(
    ens: &Ensemble,
    b: &ParamMatrix,
    opts: &InferenceOptions,
    rel_tol: f64,
) -> Result<IdentifiabilityReport, DiagnosticsError> {
    let cleared: Vec<_> = ens
        .networks()
        .iter()
        .map(|n| {
            let mut c = n.clone();
            c.clear_missing();
            c
        })
        .collect();
    let complete_ens = ens.with_networks(cleared)?;
    let complete = ensemble_information(&complete_ens, b, InfoMode::Fisher, opts)?;
    let fisher = ensemble_information(ens, b, InfoMode::Fisher, opts)?;
    let names = b.coord_names(ens.covariates().names(), &ens.spec().names());
    let (ce, cn) = null_directions(&complete, &names, rel_tol);
    let (fe, fnull) = null_directions(&fisher, &names, rel_tol);
    let cause = if !cn.is_empty() {
        IdentifiabilityCause::CompleteDataSingular
    } else if !fnull.is_empty() {
        IdentifiabilityCause::MissingnessInduced
    } else {
        IdentifiabilityCause::Identified
    };
    Ok(IdentifiabilityReport {
        coordinates: names,
        complete_det: complete.determinant(),
        fisher_det: fisher.determinant(),
        complete_info: complete,
        fisher_info: fisher,
        complete_eigenvalues: ce,
        fisher_eigenvalues: fe,
        complete_null: cn,
        fisher_null: fnull,
        cause,
        rel_tol,
    })
}
