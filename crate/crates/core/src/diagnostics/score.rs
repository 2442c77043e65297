//! Simulation score tests for added statistics, without refitting.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::residuals::TargetStatistic;
use super::DiagnosticsError;
use crate::inference::enumerate::{build_tables, TableRequest};
use crate::inference::mcmc::{sample_prepared, StatDraws};
use crate::inference::InferenceOptions;
use crate::linalg;
use crate::model::{Ensemble, ParamMatrix};
use crate::seed::{self, Purpose};
use crate::stats::{NamedTerm, StatisticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTestReport {
    pub target: String,
    pub observed: f64,
    pub sim_mean: f64,
    pub sim_sd: f64,
    /// Mid-rank quantile of the observed value among the simulations.
    pub q: f64,
    pub p: f64,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmnibusReport {
    pub targets: Vec<String>,
    pub observed: Vec<f64>,
    pub sim_mean: Vec<f64>,
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub r: usize,
}

/// Observed dataset-level totals and `r` simulated totals per target.
/// `subsets[i]` lists the networks summed by target `i`.
fn simulate_totals(
    ens: &Ensemble,
    b: &ParamMatrix,
    targets: &[TargetStatistic],
    subsets: &[Vec<usize>],
    r: usize,
    seed_value: u64,
    opts: &InferenceOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), DiagnosticsError> {
    if r < 2 {
        return Err(DiagnosticsError::TooFew(format!("need at least 2 simulated datasets, got {r}")));
    }
    if targets.len() != subsets.len() {
        return Err(DiagnosticsError::TooFew("one network subset per target is required".into()));
    }
    let mut union = BTreeSet::new();
    for (t, sub) in targets.iter().zip(subsets) {
        for &s in sub {
            if s >= ens.len() {
                return Err(DiagnosticsError::TooFew(format!("network index {s} out of range")));
            }
            if !ens.network(s).is_fully_observed() {
                return Err(DiagnosticsError::UnsupportedStatistic {
                    target: t.name.clone(),
                    net: ens.network(s).id().to_string(),
                });
            }
            union.insert(s);
        }
    }
    let extra: Vec<NamedTerm> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| NamedTerm { name: format!("@score{i}"), term: t.term() })
        .collect();
    let aug = ens.spec().concat(&StatisticSpec::new(extra)?)?;
    let p = ens.spec().p();
    let m = targets.len();
    let union: Vec<usize> = union.into_iter().collect();
    let nets: Vec<_> = union.iter().map(|&s| ens.network(s).clone()).collect();
    let want = TableRequest { unconditional: true, conditional: false, patterns: false };
    let tables = build_tables(&nets, &aug, opts.cap(), want)?;

    // Per network: observed target values and r simulated rows.
    let per_net: Vec<(Vec<f64>, StatDraws)> = union
        .par_iter()
        .zip(tables.par_iter())
        .map(|(&s, table)| {
            let net = ens.network(s);
            let scale: Vec<f64> = targets.iter().map(|t| t.scale_for(net)).collect();
            let mut theta: Vec<f64> = ens.theta(b, s)?.iter().copied().collect();
            theta.extend(std::iter::repeat_n(0.0, m));
            let prepared = aug.prepare(net)?;
            let g = prepared.eval(net);
            let observed: Vec<f64> = (0..m).map(|i| g[p + i] as f64 * scale[i]).collect();
            let mut rng = seed::stream(seed_value, net.id(), Purpose::ScoreTest, 0);
            let mut out = StatDraws::new(m);
            match &table.unconditional {
                Some(h) => {
                    let lw: Vec<f64> = (0..h.len())
                        .map(|k| {
                            h.row(k).iter().zip(&theta).map(|(&a, t)| a as f64 * t).sum::<f64>() + h.count(k).ln()
                        })
                        .collect();
                    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut cdf = Vec::with_capacity(lw.len());
                    let mut acc = 0.0;
                    for l in &lw {
                        acc += (l - max).exp();
                        cdf.push(acc);
                    }
                    for _ in 0..r {
                        let u = rng.random::<f64>() * acc;
                        let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                        let row = h.row(k);
                        out.push_f64(&(0..m).map(|i| row[p + i] as f64 * scale[i]).collect::<Vec<_>>());
                    }
                }
                None => {
                    let d = sample_prepared(net, &prepared, &theta, false, r, rng, &opts.sampler);
                    for k in 0..d.len() {
                        let row = d.row(k);
                        out.push_f64(&(0..m).map(|i| row[p + i] * scale[i]).collect::<Vec<_>>());
                    }
                }
            }
            Ok((observed, out))
        })
        .collect::<Result<_, DiagnosticsError>>()?;

    let pos = |s: usize| union.binary_search(&s).unwrap();
    let observed: Vec<f64> = (0..m)
        .map(|i| linalg::pairwise_sum(&subsets[i].iter().map(|&s| per_net[pos(s)].0[i]).collect::<Vec<_>>()))
        .collect();
    let sims: Vec<Vec<f64>> = (0..r)
        .map(|k| {
            (0..m)
                .map(|i| linalg::pairwise_sum(&subsets[i].iter().map(|&s| per_net[pos(s)].1.row(k)[i]).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    Ok((observed, sims))
}

/// Two-sided quantile p-value `2·min(q, 1 − q)` for a dataset-level
/// target summed over the completely observed networks in `subset`.
pub fn score_test_dataset(
    ens: &Ensemble,
    b: &ParamMatrix,
    target: &TargetStatistic,
    subset: &[usize],
    r: usize,
    seed: u64,
    opts: &InferenceOptions,
) -> Result<ScoreTestReport, DiagnosticsError> {
    let (obs, sims) = simulate_totals(ens, b, std::slice::from_ref(target), &[subset.to_vec()], r, seed, opts)?;
    let t = obs[0];
    let vals: Vec<f64> = sims.iter().map(|v| v[0]).collect();
    let (q, p) = quantile_p(t, &vals);
    Ok(ScoreTestReport {
        target: target.name.clone(),
        observed: t,
        sim_mean: linalg::mean(&vals),
        sim_sd: linalg::sample_sd(&vals),
        q,
        p,
        r,
    })
}

/// Mid-rank quantile of `t` among `sims` and its two-sided p-value.
/// Only the ordering of the values enters.
pub fn quantile_p(t: f64, sims: &[f64]) -> (f64, f64) {
    let tol = 1e-9 * t.abs().max(1.0);
    let below = sims.iter().filter(|&&v| v < t - tol).count() as f64;
    let equal = sims.iter().filter(|&&v| (v - t).abs() <= tol).count() as f64;
    let q = (below + 0.5 * equal) / sims.len().max(1) as f64;
    (q, (2.0 * q.min(1.0 - q)).min(1.0))
}

/// `χ² = (m − t)ᵀ V⁻¹ (m − t)` over several dataset-level targets.
pub fn score_test_omnibus(
    ens: &Ensemble,
    b: &ParamMatrix,
    targets: &[TargetStatistic],
    subsets: &[Vec<usize>],
    r: usize,
    seed: u64,
    opts: &InferenceOptions,
) -> Result<OmnibusReport, DiagnosticsError> {
    let (obs, sims) = simulate_totals(ens, b, targets, subsets, r, seed, opts)?;
    let k = targets.len();
    let mut d = StatDraws::new(k);
    for s in &sims {
        d.push_f64(s);
    }
    let mean = d.mean();
    let v = d.cov();
    let names: Vec<String> = targets.iter().map(|t| t.name.clone()).collect();
    if !linalg::is_numerically_pd(&v, 1e-10) {
        let (_, vecs) = linalg::sym_eigen(&v);
        let involved: Vec<String> = vecs
            .column(0)
            .iter()
            .zip(&names)
            .filter(|(w, _)| w.abs() > 1e-6)
            .map(|(_, n)| n.clone())
            .collect();
        return Err(DiagnosticsError::SingularCovariance(format!("collinear statistics: {}", involved.join(", "))));
    }
    let diff = &mean - DVector::from_vec(obs.clone());
    let chi2 = match linalg::spd_solve(&v, &diff) {
        Some(s) => diff.dot(&s),
        None => return Err(DiagnosticsError::SingularCovariance(names.join(", "))),
    };
    Ok(OmnibusReport {
        targets: names,
        observed: obs,
        sim_mean: mean.iter().copied().collect(),
        chi2,
        df: k,
        p: linalg::chi2_sf(chi2, k as f64),
        r,
    })
}
