//! Tests on residual records: weighted regression, size ANOVA and
//! dispersion tables.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::residuals::ResidualRecord;
use super::DiagnosticsError;
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct WaldReport {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    /// Tested coefficients.
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
}

fn usable(records: &[ResidualRecord]) -> Vec<usize> {
    records.iter().enumerate().filter(|(_, r)| !r.degenerate).map(|(i, _)| i).collect()
}

/// Weighted least squares of raw residuals (weights `1/variance`) on an
/// intercept plus `candidate` columns, with an HC1 sandwich Wald test of
/// the candidate coefficients. A constant candidate tests the intercept.
pub fn residual_regression(
    records: &[ResidualRecord],
    candidate: &[Vec<f64>],
) -> Result<WaldReport, DiagnosticsError> {
    for (c, col) in candidate.iter().enumerate() {
        if col.len() != records.len() {
            return Err(DiagnosticsError::TooFew(format!(
                "candidate column {c} has {} values for {} records",
                col.len(),
                records.len()
            )));
        }
    }
    let idx = usable(records);
    let varying: Vec<&Vec<f64>> = candidate
        .iter()
        .filter(|col| idx.iter().any(|&i| (col[i] - col[idx[0]]).abs() > 0.0))
        .collect();
    let k = 1 + varying.len();
    let n = idx.len();
    if n <= k {
        return Err(DiagnosticsError::TooFew(format!("{n} usable records for {k} coefficients")));
    }
    let x = DMatrix::from_fn(n, k, |r, c| if c == 0 { 1.0 } else { varying[c - 1][idx[r]] });
    let y = DVector::from_iterator(n, idx.iter().map(|&i| records[i].raw()));
    let w = DVector::from_iterator(n, idx.iter().map(|&i| 1.0 / records[i].variance));
    let mut xtwx = DMatrix::zeros(k, k);
    let mut xtwy = DVector::zeros(k);
    for r in 0..n {
        let xr = x.row(r).transpose();
        xtwx += &xr * xr.transpose() * w[r];
        xtwy += &xr * (w[r] * y[r]);
    }
    if !linalg::is_numerically_pd(&xtwx, 1e-12) {
        return Err(DiagnosticsError::SingularDesign("candidate columns are collinear with the intercept".into()));
    }
    let bread = linalg::spd_inverse(&xtwx)
        .ok_or_else(|| DiagnosticsError::SingularDesign("weighted design is not invertible".into()))?;
    let beta = &bread * &xtwy;
    let mut meat = DMatrix::zeros(k, k);
    for r in 0..n {
        let xr = x.row(r).transpose();
        let e = y[r] - (x.row(r) * &beta)[(0, 0)];
        meat += &xr * xr.transpose() * (w[r] * w[r] * e * e);
    }
    let cov = &bread * meat * &bread * (n as f64 / (n - k) as f64);
    let tested: Vec<usize> = if varying.is_empty() { vec![0] } else { (1..k).collect() };
    let bt = DVector::from_iterator(tested.len(), tested.iter().map(|&c| beta[c]));
    let vt = DMatrix::from_fn(tested.len(), tested.len(), |a, b| cov[(tested[a], tested[b])]);
    let chi2 = if bt.amax() == 0.0 {
        0.0
    } else {
        match linalg::spd_solve(&vt, &bt) {
            Some(s) => bt.dot(&s),
            None => f64::INFINITY,
        }
    };
    let df = tested.len();
    Ok(WaldReport {
        chi2,
        df,
        p: linalg::chi2_sf(chi2, df as f64),
        coef: bt.iter().copied().collect(),
        se: tested.iter().map(|&c| cov[(c, c)].sqrt()).collect(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaReport {
    /// `(size, count, weighted mean raw residual)`.
    pub groups: Vec<(usize, usize, f64)>,
    /// Unit-dispersion statistic, `df = groups`.
    pub chi2: f64,
    pub chi2_df: usize,
    pub chi2_p: f64,
    /// Dispersion-adjusted statistic.
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
    pub dispersion: f64,
}

/// Weighted one-way test that every size group has mean-zero residuals.
pub fn size_anova(records: &[ResidualRecord], sizes: &[usize]) -> Result<AnovaReport, DiagnosticsError> {
    if sizes.len() != records.len() {
        return Err(DiagnosticsError::TooFew(format!("{} sizes for {} records", sizes.len(), records.len())));
    }
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for i in usable(records) {
        groups.entry(sizes[i]).or_default().push((records[i].raw(), 1.0 / records[i].variance));
    }
    let n: usize = groups.values().map(Vec::len).sum();
    let g = groups.len();
    if g == 0 {
        return Err(DiagnosticsError::TooFew("no usable residual records".into()));
    }
    let mut chi2 = 0.0;
    let mut within = 0.0;
    let mut rows = Vec::new();
    for (&size, obs) in &groups {
        let sw: f64 = obs.iter().map(|(_, w)| w).sum();
        let swy: f64 = obs.iter().map(|(y, w)| w * y).sum();
        let mean = swy / sw;
        chi2 += swy * swy / sw;
        within += obs.iter().map(|(y, w)| w * (y - mean) * (y - mean)).sum::<f64>();
        rows.push((size, obs.len(), mean));
    }
    let df2 = n.saturating_sub(g);
    let dispersion = if df2 > 0 { within / df2 as f64 } else { f64::NAN };
    let (f, p) = if chi2 == 0.0 {
        (0.0, 1.0)
    } else if df2 == 0 || dispersion <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = chi2 / g as f64 / dispersion;
        (f, linalg::f_sf(f, g as f64, df2 as f64))
    };
    Ok(AnovaReport {
        groups: rows,
        chi2,
        chi2_df: g,
        chi2_p: linalg::chi2_sf(chi2, g as f64),
        f,
        df1: g,
        df2,
        p,
        dispersion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdRow {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub note: Option<String>,
}

/// Residual SD overall (`"all"`) and per group label.
pub fn heterogeneity_sd(records: &[ResidualRecord], groups: &[String]) -> Result<Vec<SdRow>, DiagnosticsError> {
    if groups.len() != records.len() {
        return Err(DiagnosticsError::TooFew(format!("{} group labels for {} records", groups.len(), records.len())));
    }
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for i in usable(records) {
        by.entry(groups[i].as_str()).or_default().push(records[i].residual);
        all.push(records[i].residual);
    }
    let row = |group: &str, xs: &[f64]| {
        if xs.len() < 2 {
            SdRow {
                group: group.to_string(),
                count: xs.len(),
                mean: linalg::mean(xs),
                sd: f64::NAN,
                note: Some("fewer than 2 records".into()),
            }
        } else {
            SdRow { group: group.to_string(), count: xs.len(), mean: linalg::mean(xs), sd: linalg::sample_sd(xs), note: None }
        }
    };
    let mut out = vec![row("all", &all)];
    let distinct = by.len();
    if distinct > 1 || by.keys().next().is_some_and(|k| *k != "all") {
        out.extend(by.iter().map(|(g, xs)| row(g, xs)));
    }
    Ok(out)
}
