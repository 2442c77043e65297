//! Result serialization: `fit.json`, CSV tables and the text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::diagnostics::{AnovaReport, DensityCell, OmnibusReport, ResidualRecord, ScoreTestReport, SdRow, WaldReport};
use crate::inference::FitResult;
use crate::linalg;
use crate::model::{Ensemble, ParamMatrix};

/// `***` at p ≤ 0.001, `**` at p ≤ 0.01, `*` at p ≤ 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub covariate: String,
    pub statistic: String,
    pub estimate: f64,
    pub se: f64,
    pub mcse: f64,
    pub z: f64,
    pub p: f64,
}

/// Full coefficient matrix, enough to reload a fit with `--params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefMatrix {
    pub covariates: Vec<String>,
    pub statistics: Vec<String>,
    /// Row per covariate.
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub mask: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<Vec<f64>>>,
}

/// How random streams are derived from the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub seed: u64,
    pub derivation: String,
    pub purposes: Vec<(String, u64)>,
}

impl StreamInfo {
    pub fn new(seed: u64) -> Self {
        use crate::seed::Purpose::*;
        let purposes = [
            ("fit-unconditional", FitUnconditional),
            ("fit-conditional", FitConditional),
            ("path-sampling", PathSampling),
            ("information", Information),
            ("residual-outer", ResidualOuter),
            ("residual-inner", ResidualInner),
            ("score-test", ScoreTest),
            ("simulate", Simulate),
            ("boundary", Boundary),
            ("general", General),
        ]
        .iter()
        .map(|(n, p)| (n.to_string(), *p as u64))
        .collect();
        StreamInfo {
            seed,
            derivation: "ChaCha8 seeded by splitmix(splitmix((seed ^ fnv1a(net_id)) ^ splitmix(purpose)) ^ index)".into(),
            purposes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub loglik: f64,
    pub loglik_mcse: f64,
    pub aic: f64,
    pub bic: f64,
    pub networks: usize,
    pub coefficients: Vec<CoefRow>,
    pub information: Vec<Vec<f64>>,
    pub coef_matrix: CoefMatrix,
    pub streams: StreamInfo,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl FitReport {
    pub fn new(fit: &FitResult, ens: &Ensemble) -> Self {
        let covs = ens.covariates().names().to_vec();
        let stats = ens.spec().names();
        let coefficients = fit
            .params
            .free_coords()
            .iter()
            .enumerate()
            .map(|(c, &(k, l))| {
                let (est, se) = (fit.estimate[c], fit.se[c]);
                let z = est / se;
                CoefRow {
                    name: fit.coef_names[c].clone(),
                    covariate: covs[k].clone(),
                    statistic: stats[l].clone(),
                    estimate: est,
                    se,
                    mcse: fit.estimate_mcse[c],
                    z,
                    p: linalg::normal_two_sided_p(z),
                }
            })
            .collect();
        let b = &fit.params;
        FitReport {
            method: fit.method.as_str().into(),
            converged: fit.converged,
            iterations: fit.iterations,
            score_norm: fit.score_norm,
            loglik: fit.loglik,
            loglik_mcse: fit.loglik_mcse,
            aic: fit.aic,
            bic: fit.bic,
            networks: ens.len(),
            coefficients,
            information: rows(&fit.information),
            coef_matrix: CoefMatrix {
                covariates: covs,
                statistics: stats,
                values: rows(b.coef()),
                mask: (0..b.q()).map(|r| b.mask().row(r).iter().copied().collect()).collect(),
                offset: b.offset().map(rows),
            },
            streams: StreamInfo::new(fit.seed),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Reads the coefficient matrix from a `fit.json`, checking it against the
/// model's covariate and statistic names.
/// Any JSON object with a `coef_matrix` field, such as a `fit.json`.
#[derive(Deserialize)]
struct ParamsFile {
    coef_matrix: CoefMatrix,
}

pub fn load_params(path: &Path, ens: &Ensemble, template: &ParamMatrix) -> Result<ParamMatrix, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let rep: ParamsFile = serde_json::from_str(&text).map_err(|e| IoError::Config(format!("{}: {e}", path.display())))?;
    let m = &rep.coef_matrix;
    if m.covariates != ens.covariates().names() || m.statistics != ens.spec().names() {
        return Err(IoError::Config(format!(
            "{} was fitted with covariates {:?} and statistics {:?}, model has {:?} and {:?}",
            path.display(),
            m.covariates,
            m.statistics,
            ens.covariates().names(),
            ens.spec().names()
        )));
    }
    let (q, p) = (template.q(), template.p());
    if m.values.len() != q || m.values.iter().any(|row| row.len() != p) {
        return Err(IoError::Config(format!("{}: coefficient values must be {q} rows of {p}", path.display())));
    }
    let coef = DMatrix::from_fn(q, p, |k, l| m.values[k][l]);
    ParamMatrix::new(coef, template.mask().clone(), template.offset().cloned())
        .map_err(|e| IoError::Config(e.to_string()))
}

/// Text coefficient table with estimate, SE and stars.
pub fn coefficient_table(rep: &FitReport) -> String {
    let w = rep.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:>10}  {:>9}  {:>8}  {:>9}", "effect", "estimate", "se", "z", "p");
    for c in &rep.coefficients {
        let _ = writeln!(
            out,
            "{:<w$}  {:>10.4}  {:>9.4}  {:>8.2}  {:>9.2e} {}",
            c.name,
            c.estimate,
            c.se,
            c.z,
            c.p,
            significance_stars(c.p)
        );
    }
    let _ = writeln!(out, "significance: *** p<=0.001, ** p<=0.01, * p<=0.05");
    let _ = writeln!(
        out,
        "loglik {:.4} (mcse {:.2e})  AIC {:.3}  BIC {:.3}  {} networks, {} iterations, {}",
        rep.loglik, rep.loglik_mcse, rep.aic, rep.bic, rep.networks, rep.iterations, rep.method
    );
    out
}

/// Header plus string rows, written as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), IoError> {
    fs::write(path, table.to_csv()).map_err(|e| IoError::io(path, e))
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x}")
    }
}

pub fn residual_table(records: &[ResidualRecord]) -> Table {
    let mut t = Table::new(&["net_id", "target", "point", "expectation", "variance", "residual", "degenerate", "tags"]);
    for r in records {
        t.push(vec![
            r.net_id.clone(),
            r.target.clone(),
            num(r.point),
            num(r.expectation),
            num(r.variance),
            num(r.residual),
            r.degenerate.to_string(),
            r.tags.join(";"),
        ]);
    }
    t
}

pub fn density_table(cells: &[DensityCell]) -> Table {
    let mut t = Table::new(&["n", "group", "count", "mean_error", "se"]);
    for c in cells {
        t.push(vec![c.n.to_string(), c.group.clone(), c.count.to_string(), num(c.mean_error), num(c.se)]);
    }
    t
}

pub fn sd_table(blocks: &[(String, Vec<SdRow>)]) -> Table {
    let mut t = Table::new(&["target", "group", "count", "mean", "sd", "note"]);
    for (target, rows) in blocks {
        for r in rows {
            t.push(vec![
                target.clone(),
                r.group.clone(),
                r.count.to_string(),
                num(r.mean),
                num(r.sd),
                r.note.clone().unwrap_or_default(),
            ]);
        }
    }
    t
}

/// One row per hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub enum TestRow {
    Regression { target: String, candidates: String, report: WaldReport },
    SizeAnova { target: String, report: AnovaReport },
    Score(ScoreTestReport),
    Omnibus(OmnibusReport),
}

pub fn tests_table(tests: &[TestRow]) -> Table {
    let mut t = Table::new(&["test", "target", "statistic", "value", "df1", "df2", "p", "detail"]);
    for row in tests {
        t.push(match row {
            TestRow::Regression { target, candidates, report } => vec![
                "residual-regression".into(),
                target.clone(),
                "wald-chi2".into(),
                num(report.chi2),
                report.df.to_string(),
                String::new(),
                num(report.p),
                format!("candidates={candidates};n={}", report.n),
            ],
            TestRow::SizeAnova { target, report } => vec![
                "size-anova".into(),
                target.clone(),
                "F".into(),
                num(report.f),
                report.df1.to_string(),
                report.df2.to_string(),
                num(report.p),
                format!("chi2={};chi2_p={};dispersion={}", num(report.chi2), num(report.chi2_p), num(report.dispersion)),
            ],
            TestRow::Score(r) => vec![
                "score-quantile".into(),
                r.target.clone(),
                "q".into(),
                num(r.q),
                String::new(),
                String::new(),
                num(r.p),
                format!("observed={};sim_mean={};sim_sd={};r={}", num(r.observed), num(r.sim_mean), num(r.sim_sd), r.r),
            ],
            TestRow::Omnibus(r) => vec![
                "score-omnibus".into(),
                r.targets.join(";"),
                "chi2".into(),
                num(r.chi2),
                r.df.to_string(),
                String::new(),
                num(r.p),
                format!("r={}", r.r),
            ],
        });
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(0.001), "***");
        assert_eq!(significance_stars(0.0011), "**");
        assert_eq!(significance_stars(0.01), "**");
        assert_eq!(significance_stars(0.05), "*");
        assert_eq!(significance_stars(0.051), "");
    }

    #[test]
    fn csv_quotes_and_missing_values() {
        let rec = ResidualRecord {
            net_id: "a,b".into(),
            n: 3,
            target: "edges".into(),
            point: 1.0,
            expectation: 1.0,
            variance: 0.0,
            residual: f64::NAN,
            degenerate: true,
            tags: vec!["E".into(), "x".into()],
        };
        let csv = residual_table(&[rec]).to_csv();
        assert_eq!(csv.lines().nth(1).unwrap(), "\"a,b\",edges,1,1,0,NA,true,E;x");
    }
}
