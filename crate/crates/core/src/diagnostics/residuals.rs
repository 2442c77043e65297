//! Pearson residuals for target statistics, with nested-simulation
//! variance estimators for partially observed networks.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::DiagnosticsError;
use crate::graph::Network;
use crate::inference::enumerate::{build_tables, NetworkTables, TableRequest};
use crate::inference::mcmc::sample_prepared;
use crate::inference::nested::{nested_sample, NestedPlan, NestedSample};
use crate::inference::InferenceOptions;
use crate::linalg;
use crate::model::{Ensemble, ParamMatrix};
use crate::seed::{self, Purpose};
use crate::stats::{NamedTerm, PreparedSpec, StatisticSpec, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    PerNetwork,
    /// One record for the sum over all networks.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Term(Term),
    /// Edge count over dyad count.
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetStatistic {
    pub name: String,
    pub scope: Scope,
    pub measure: Measure,
}

impl TargetStatistic {
    pub fn per_network(name: impl Into<String>, measure: Measure) -> Self {
        TargetStatistic { name: name.into(), scope: Scope::PerNetwork, measure }
    }

    pub fn edges() -> Self {
        Self::per_network("edges", Measure::Term(Term::Edges))
    }

    pub fn density() -> Self {
        Self::per_network("density", Measure::Density)
    }

    pub(crate) fn term(&self) -> Term {
        match &self.measure {
            Measure::Term(t) => t.clone(),
            Measure::Density => Term::Edges,
        }
    }

    pub(crate) fn scale_for(&self, net: &Network) -> f64 {
        match self.measure {
            Measure::Term(_) => 1.0,
            Measure::Density => 1.0 / net.num_dyads().max(1) as f64,
        }
    }

    /// Model spec followed by the target as one extra column.
    pub(crate) fn augment(&self, spec: &StatisticSpec) -> Result<StatisticSpec, DiagnosticsError> {
        let mut name = format!("@target:{}", self.name);
        while spec.index_of(&name).is_some() {
            name.push('\'');
        }
        let extra = StatisticSpec::new(vec![NamedTerm { name, term: self.term() }])?;
        Ok(spec.concat(&extra)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceEstimator {
    Direct,
    DirectAdjusted,
    TotalVariance,
}

impl VarianceEstimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarianceEstimator::Direct => "direct",
            VarianceEstimator::DirectAdjusted => "direct-adjusted",
            VarianceEstimator::TotalVariance => "total-variance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedSimPlan {
    pub r1: usize,
    pub r2: usize,
    pub estimator: VarianceEstimator,
    pub seed: u64,
}

impl Default for NestedSimPlan {
    fn default() -> Self {
        NestedSimPlan { r1: 500, r2: 50, estimator: VarianceEstimator::TotalVariance, seed: 1 }
    }
}

impl NestedSimPlan {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if self.r1 < 2 {
            return Err(DiagnosticsError::Plan(format!("R1 must be at least 2, got {}", self.r1)));
        }
        if self.r2 < 2 && self.estimator != VarianceEstimator::Direct {
            return Err(DiagnosticsError::Plan(format!(
                "{} estimator needs R2 of at least 2, got {}",
                self.estimator.as_str(),
                self.r2
            )));
        }
        Ok(())
    }

    fn nested(&self) -> NestedPlan {
        NestedPlan { r1: self.r1, r2: self.r2.max(1) }
    }

    fn apply(&self, draws: &NestedSample) -> Result<f64, DiagnosticsError> {
        match self.estimator {
            VarianceEstimator::Direct => variance_direct(self, draws),
            VarianceEstimator::DirectAdjusted => variance_direct_adjusted(self, draws),
            VarianceEstimator::TotalVariance => variance_total(self, draws),
        }
    }
}

fn check_draws(draws: &NestedSample) -> Result<(), DiagnosticsError> {
    if draws.r1() < 2 {
        return Err(DiagnosticsError::Plan(format!("need at least 2 outer replicates, got {}", draws.r1())));
    }
    if draws.outer.p() != 1 {
        return Err(DiagnosticsError::Plan("estimators take a single projected statistic".into()));
    }
    Ok(())
}

/// Sample variance over outer replicates of the inner means.
pub fn variance_direct(_plan: &NestedSimPlan, draws: &NestedSample) -> Result<f64, DiagnosticsError> {
    check_draws(draws)?;
    Ok(draws.direct()[(0, 0)])
}

/// Direct estimate minus `(1/R2)` times the mean inner sample variance.
pub fn variance_direct_adjusted(_plan: &NestedSimPlan, draws: &NestedSample) -> Result<f64, DiagnosticsError> {
    check_draws(draws)?;
    Ok(draws.direct_adjusted()[(0, 0)])
}

/// Pooled variance over all inner draws minus the mean inner variance.
pub fn variance_total(_plan: &NestedSimPlan, draws: &NestedSample) -> Result<f64, DiagnosticsError> {
    check_draws(draws)?;
    Ok(draws.total_variance()[(0, 0)])
}

/// Nested draws of a single target statistic on one network. Inner
/// moments are enumerated when the free dyads fit within `inner_cap`.
#[allow(clippy::too_many_arguments)]
pub fn nested_draws(
    net: &Network,
    spec: &StatisticSpec,
    theta: &[f64],
    target: &TargetStatistic,
    plan: &NestedSimPlan,
    opts: &InferenceOptions,
    inner_cap: usize,
    index: u64,
) -> Result<NestedSample, DiagnosticsError> {
    plan.validate()?;
    let aug = target.augment(spec)?;
    let prepared = aug.prepare(net)?;
    let mut th = theta.to_vec();
    th.push(0.0);
    let ns = nested_sample(net, &prepared, &th, plan.nested(), plan.seed, index, &opts.sampler, inner_cap);
    Ok(ns.project(spec.p(), target.scale_for(net)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRecord {
    pub net_id: String,
    pub n: usize,
    pub target: String,
    /// `t(y)` when fully observed, else the best predictor `τ(B̂ | y_obs)`.
    pub point: f64,
    /// `τ(B̂)`.
    pub expectation: f64,
    pub variance: f64,
    pub residual: f64,
    pub degenerate: bool,
    pub tags: Vec<String>,
}

impl ResidualRecord {
    fn new(net_id: String, n: usize, target: &str, point: f64, expectation: f64, variance: f64, tags: Vec<String>) -> Self {
        let floor = 1e-12 * expectation.abs().max(point.abs()).max(1.0).powi(2);
        let degenerate = !variance.is_finite() || variance <= floor;
        let residual = if degenerate { f64::NAN } else { (point - expectation) / variance.sqrt() };
        ResidualRecord { net_id, n, target: target.to_string(), point, expectation, variance, residual, degenerate, tags }
    }

    /// `point − expectation`.
    pub fn raw(&self) -> f64 {
        self.point - self.expectation
    }
}

struct NetTarget {
    point: f64,
    expectation: f64,
    variance: f64,
}

#[allow(clippy::too_many_arguments)]
fn network_target(
    net: &Network,
    prepared: &PreparedSpec,
    tables: &NetworkTables,
    theta: &[f64],
    col: usize,
    scale: f64,
    plan: &NestedSimPlan,
    opts: &InferenceOptions,
    index: u64,
    want_variance: bool,
) -> Result<NetTarget, DiagnosticsError> {
    let cap = opts.cap();
    let observed_t = || prepared.eval(net)[col] as f64 * scale;
    if net.is_fully_observed() {
        if let Some(h) = &tables.unconditional {
            let m = h.moments(theta);
            return Ok(NetTarget {
                point: observed_t(),
                expectation: m.mean[col] * scale,
                variance: m.cov[(col, col)] * scale * scale,
            });
        }
    } else if let Some(pt) = &tables.patterns {
        let code = pt.observed_code(net);
        let pm = pt.pattern_moments(theta);
        let point = pm.iter().find(|m| m.code == code).map(|m| m.mean[col]).expect("observed pattern is enumerated");
        let dec = pt.decomposition(theta);
        return Ok(NetTarget {
            point: point * scale,
            expectation: dec.mean[col] * scale,
            variance: dec.var_cond_mean[(col, col)] * scale * scale,
        });
    }

    let point = if net.is_fully_observed() {
        observed_t()
    } else if let Some(h) = &tables.conditional {
        h.moments(theta).mean[col] * scale
    } else {
        let rng = seed::stream(plan.seed, net.id(), Purpose::ResidualInner, u64::MAX - index);
        let d = sample_prepared(net, prepared, theta, true, opts.draws, rng, &opts.sampler);
        d.mean()[col] * scale
    };
    if !want_variance {
        let rng = seed::stream(plan.seed, net.id(), Purpose::ResidualOuter, u64::MAX - index);
        let d = sample_prepared(net, prepared, theta, false, opts.draws, rng, &opts.sampler);
        return Ok(NetTarget { point, expectation: d.mean()[col] * scale, variance: f64::NAN });
    }
    let ns = nested_sample(net, prepared, theta, plan.nested(), plan.seed, index, &opts.sampler, cap).project(col, scale);
    let expectation = linalg::mean(&ns.outer.column(0));
    Ok(NetTarget { point, expectation, variance: plan.apply(&ns)? })
}

type NetTargets = Vec<NetTarget>;

fn all_targets(
    ens: &Ensemble,
    b: &ParamMatrix,
    target: &TargetStatistic,
    plan: &NestedSimPlan,
    opts: &InferenceOptions,
    want_variance: bool,
) -> Result<NetTargets, DiagnosticsError> {
    plan.validate()?;
    let aug = target.augment(ens.spec())?;
    let col = ens.spec().p();
    let want = TableRequest { unconditional: true, conditional: true, patterns: true };
    let tables = build_tables(ens.networks(), &aug, opts.cap(), want)?;
    (0..ens.len())
        .into_par_iter()
        .map(|s| {
            let net = ens.network(s);
            let mut theta: Vec<f64> = ens.theta(b, s)?.iter().copied().collect();
            theta.push(0.0);
            let prepared = aug.prepare(net)?;
            network_target(net, &prepared, &tables[s], &theta, col, target.scale_for(net), plan, opts, s as u64, want_variance)
        })
        .collect()
}

/// Pearson residuals `(point − τ(B̂)) / sqrt(variance)` for a target.
pub fn pearson_residual(
    ens: &Ensemble,
    b: &ParamMatrix,
    target: &TargetStatistic,
    plan: &NestedSimPlan,
    opts: &InferenceOptions,
) -> Result<Vec<ResidualRecord>, DiagnosticsError> {
    let parts = all_targets(ens, b, target, plan, opts, true)?;
    Ok(match target.scope {
        Scope::PerNetwork => parts
            .into_iter()
            .enumerate()
            .map(|(s, t)| {
                let net = ens.network(s);
                ResidualRecord::new(
                    net.id().to_string(),
                    net.n(),
                    &target.name,
                    t.point,
                    t.expectation,
                    t.variance,
                    ens.tags(s).to_vec(),
                )
            })
            .collect(),
        Scope::Cumulative => {
            let sum = |f: fn(&NetTarget) -> f64| linalg::pairwise_sum(&parts.iter().map(f).collect::<Vec<_>>());
            vec![ResidualRecord::new(
                "ALL".into(),
                0,
                &target.name,
                sum(|t| t.point),
                sum(|t| t.expectation),
                sum(|t| t.variance),
                Vec::new(),
            )]
        }
    })
}

/// Mean density prediction error in one `(size, tag group)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCell {
    pub n: usize,
    pub group: String,
    pub count: usize,
    pub mean_error: f64,
    /// `NaN` for single-network cells.
    pub se: f64,
}

/// Observed (or best-predicted) density minus model-expected density,
/// averaged by network size and tag group.
pub fn density_error_summary(
    ens: &Ensemble,
    b: &ParamMatrix,
    plan: &NestedSimPlan,
    opts: &InferenceOptions,
) -> Result<Vec<DensityCell>, DiagnosticsError> {
    let parts = all_targets(ens, b, &TargetStatistic::density(), plan, opts, false)?;
    let mut cells: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for (s, t) in parts.iter().enumerate() {
        cells.entry((ens.network(s).n(), ens.tag_group(s))).or_default().push(t.point - t.expectation);
    }
    Ok(cells
        .into_iter()
        .map(|((n, group), errs)| DensityCell {
            n,
            group,
            count: errs.len(),
            mean_error: linalg::mean(&errs),
            se: linalg::sample_sd(&errs) / (errs.len() as f64).sqrt(),
        })
        .collect())
}
