//! TOML model configuration: terms with their covariate formulas, offsets,
//! estimation settings and the diagnostics plan.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::ensemble::EnsembleData;
use super::IoError;
use crate::diagnostics::{Measure, NestedSimPlan, Scope, TargetStatistic, VarianceEstimator};
use crate::graph::Network;
use crate::inference::{FitOptions, InfoMode, NestedPlan};
use crate::model::{Ensemble, NetworkCovariates, ParamMatrix};
use crate::stats::{NamedTerm, StatisticSpec, TermDef};

fn cfg(msg: impl Into<String>) -> IoError {
    IoError::Config(msg.into())
}

/// A network-level covariate as written in a term's `covariates` list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CovariateRef {
    /// `"1"`.
    Intercept,
    /// `"n"`.
    Size,
    /// `"log_n"` or `"log(n)"`.
    LogSize,
    /// `"log2_n"` or `"log^2(n)"`: the squared natural log of the size.
    LogSizeSquared,
    /// `"tag:X"`: one when the network carries tag `X`.
    Tag(String),
    /// A key of `net_covariates`.
    Named(String),
}

impl CovariateRef {
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "1" | "intercept" => CovariateRef::Intercept,
            "n" => CovariateRef::Size,
            "log_n" | "log(n)" => CovariateRef::LogSize,
            "log2_n" | "log^2(n)" | "log²(n)" => CovariateRef::LogSizeSquared,
            t => match t.strip_prefix("tag:") {
                Some(tag) => CovariateRef::Tag(tag.to_string()),
                None => CovariateRef::Named(t.to_string()),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            CovariateRef::Intercept => "1".into(),
            CovariateRef::Size => "n".into(),
            CovariateRef::LogSize => "log_n".into(),
            CovariateRef::LogSizeSquared => "log2_n".into(),
            CovariateRef::Tag(t) => format!("tag:{t}"),
            CovariateRef::Named(n) => n.clone(),
        }
    }

    pub fn eval(&self, net: &Network, covariates: &std::collections::BTreeMap<String, f64>, tags: &[String]) -> Result<f64, IoError> {
        let ln = (net.n() as f64).ln();
        Ok(match self {
            CovariateRef::Intercept => 1.0,
            CovariateRef::Size => net.n() as f64,
            CovariateRef::LogSize => ln,
            CovariateRef::LogSizeSquared => ln * ln,
            CovariateRef::Tag(t) => f64::from(u8::from(tags.iter().any(|x| x == t))),
            CovariateRef::Named(name) => *covariates
                .get(name)
                .ok_or_else(|| cfg(format!("network `{}` has no covariate `{name}`", net.id())))?,
        })
    }

    /// Values over every network in `data`.
    pub fn column(&self, data: &EnsembleData) -> Result<Vec<f64>, IoError> {
        data.networks
            .iter()
            .zip(&data.net_covariates)
            .zip(&data.tags)
            .map(|((net, cov), tags)| self.eval(net, cov, tags))
            .collect()
    }
}

fn intercept_only() -> Vec<String> {
    vec!["1".into()]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TermConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "intercept_only")]
    pub covariates: Vec<String>,
    #[serde(flatten)]
    pub term: TermDef,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetConfig {
    pub term: String,
    #[serde(default = "one")]
    pub covariate: String,
    pub value: f64,
}

fn one() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub enum_cap: usize,
    pub draws: usize,
    pub burnin_factor: f64,
    pub interval_factor: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// `"fisher"` or `"observed"`.
    pub info_mode: String,
    pub force_mcmc: bool,
    pub path_intervals: usize,
    pub polish_iters: usize,
    pub final_draws_factor: usize,
    pub check_boundary: bool,
    /// Outer and inner replicates for simulated Fisher information.
    pub info_r1: usize,
    pub info_r2: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        EstimationConfig {
            enum_cap: f.inference.enum_cap,
            draws: f.inference.draws,
            burnin_factor: f.inference.sampler.burnin_factor,
            interval_factor: f.inference.sampler.interval_factor,
            max_iter: f.max_iter,
            tol: f.tol,
            seed: f.inference.seed,
            info_mode: "fisher".into(),
            force_mcmc: false,
            path_intervals: f.path_intervals,
            polish_iters: f.polish_iters,
            final_draws_factor: f.final_draws_factor,
            check_boundary: f.check_boundary,
            info_r1: f.inference.nested.r1,
            info_r2: f.inference.nested.r2,
        }
    }
}

impl EstimationConfig {
    pub fn fit_options(&self) -> Result<FitOptions, IoError> {
        let info_mode = match self.info_mode.as_str() {
            "fisher" => InfoMode::Fisher,
            "observed" => InfoMode::Observed,
            m => return Err(cfg(format!("unknown info_mode `{m}` (use `fisher` or `observed`)"))),
        };
        if self.draws < 2 {
            return Err(cfg("estimation.draws must be at least 2"));
        }
        if !(self.burnin_factor >= 0.0 && self.interval_factor > 0.0) {
            return Err(cfg("burnin_factor must be nonnegative and interval_factor positive"));
        }
        if self.enum_cap > 30 {
            return Err(cfg(format!("enum_cap {} is above the supported maximum of 30", self.enum_cap)));
        }
        let mut f = FitOptions::default();
        f.inference.enum_cap = self.enum_cap;
        f.inference.draws = self.draws;
        f.inference.sampler.burnin_factor = self.burnin_factor;
        f.inference.sampler.interval_factor = self.interval_factor;
        f.inference.seed = self.seed;
        f.inference.force_mcmc = self.force_mcmc;
        f.inference.nested = NestedPlan { r1: self.info_r1, r2: self.info_r2 };
        f.max_iter = self.max_iter;
        f.tol = self.tol;
        f.path_intervals = self.path_intervals;
        f.polish_iters = self.polish_iters;
        f.final_draws_factor = self.final_draws_factor.max(1);
        f.check_boundary = self.check_boundary;
        f.info_mode = info_mode;
        Ok(f)
    }
}

/// A residual or score-test target: `kind = "density"` or any term kind.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TargetConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// `"per-network"` or `"cumulative"`.
    #[serde(default)]
    pub scope: Option<String>,
    /// Score tests only: restrict to networks carrying one of these tags.
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(flatten)]
    pub measure: toml::Table,
}

impl TargetConfig {
    fn resolve(&self) -> Result<TargetStatistic, IoError> {
        let kind = self.measure.get("kind").and_then(|k| k.as_str()).ok_or_else(|| cfg("target without `kind`"))?;
        let (measure, default) = if kind == "density" {
            (Measure::Density, "density".to_string())
        } else {
            let def: TermDef = toml::Value::Table(self.measure.clone())
                .try_into()
                .map_err(|e| cfg(format!("target `{kind}`: {e}")))?;
            let term = def.to_term().map_err(|e| cfg(e.to_string()))?;
            let name = term.default_name();
            (Measure::Term(term), name)
        };
        let scope = match self.scope.as_deref() {
            None | Some("per-network") => Scope::PerNetwork,
            Some("cumulative") => Scope::Cumulative,
            Some(s) => return Err(cfg(format!("unknown target scope `{s}`"))),
        };
        Ok(TargetStatistic { name: self.name.clone().unwrap_or(default), scope, measure })
    }
}

fn default_targets() -> Vec<TargetConfig> {
    let mut measure = toml::Table::new();
    measure.insert("kind".into(), toml::Value::String("edges".into()));
    vec![TargetConfig { name: None, scope: None, tags: Vec::new(), measure }]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub r1: usize,
    pub r2: usize,
    /// `"total-variance"`, `"direct"` or `"direct-adjusted"`.
    pub estimator: String,
    pub targets: Vec<TargetConfig>,
    /// Covariates (same syntax as term covariates) regressed on residuals.
    pub candidates: Vec<String>,
    pub size_anova: bool,
    pub score_targets: Vec<TargetConfig>,
    pub score_draws: usize,
    pub omnibus: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let p = NestedSimPlan::default();
        DiagnosticsConfig {
            r1: p.r1,
            r2: p.r2,
            estimator: p.estimator.as_str().into(),
            targets: default_targets(),
            candidates: Vec::new(),
            size_anova: true,
            score_targets: Vec::new(),
            score_draws: 200,
            omnibus: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub offsets: Vec<OffsetConfig>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

/// Score-test target with its network filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTarget {
    pub target: TargetStatistic,
    pub tags: Vec<String>,
}

impl ScoreTarget {
    /// Fully observed networks carrying one of the tags (any, when untagged).
    pub fn subset(&self, ens: &Ensemble) -> Vec<usize> {
        (0..ens.len())
            .filter(|&s| ens.network(s).is_fully_observed())
            .filter(|&s| self.tags.is_empty() || ens.tags(s).iter().any(|t| self.tags.contains(t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsPlan {
    pub nested: NestedSimPlan,
    pub targets: Vec<TargetStatistic>,
    /// `(label, value per network)`.
    pub candidates: Vec<(String, Vec<f64>)>,
    pub size_anova: bool,
    pub score_targets: Vec<ScoreTarget>,
    pub score_draws: usize,
    pub omnibus: bool,
}

/// Everything needed to run a command.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetup {
    pub ensemble: Ensemble,
    /// Starting coefficient matrix: zeros, with the formula's mask and offsets.
    pub template: ParamMatrix,
    pub fit: FitOptions,
    pub diagnostics: DiagnosticsPlan,
}

impl ModelSetup {
    pub fn set_seed(&mut self, seed: u64) {
        self.fit.inference.seed = seed;
        self.diagnostics.nested.seed = seed;
    }

    pub fn set_enum_cap(&mut self, cap: usize) {
        self.fit.inference.enum_cap = cap;
    }
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| cfg(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text)
    }

    /// Statistic spec in declaration order.
    pub fn spec(&self) -> Result<StatisticSpec, IoError> {
        if self.terms.is_empty() {
            return Err(cfg("at least one [[terms]] entry is required"));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let term = t.term.to_term().map_err(|e| cfg(e.to_string()))?;
                let name = t.name.clone().unwrap_or_else(|| term.default_name());
                Ok(NamedTerm { name, term })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        StatisticSpec::new(terms).map_err(|e| cfg(e.to_string()))
    }

    /// Covariate columns in first-use order over terms, then offsets.
    fn covariate_refs(&self) -> Vec<CovariateRef> {
        let mut out: Vec<CovariateRef> = Vec::new();
        let all = self.terms.iter().flat_map(|t| t.covariates.iter()).chain(self.offsets.iter().map(|o| &o.covariate));
        for c in all {
            let r = CovariateRef::parse(c);
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }

    pub fn build(&self, data: &EnsembleData) -> Result<ModelSetup, IoError> {
        let spec = self.spec()?;
        let refs = self.covariate_refs();
        let labels: Vec<String> = refs.iter().map(CovariateRef::label).collect();
        let columns = refs.iter().map(|r| r.column(data)).collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<Vec<f64>> = (0..data.len()).map(|s| columns.iter().map(|c| c[s]).collect()).collect();
        let covariates = NetworkCovariates::new(labels, rows).map_err(|e| cfg(e.to_string()))?;

        let (q, p) = (refs.len(), spec.p());
        let mut mask = DMatrix::from_element(q, p, false);
        for (l, t) in self.terms.iter().enumerate() {
            for c in &t.covariates {
                let k = refs.iter().position(|r| *r == CovariateRef::parse(c)).expect("collected above");
                if mask[(k, l)] {
                    return Err(cfg(format!("covariate `{c}` listed twice for term `{}`", spec.names()[l])));
                }
                mask[(k, l)] = true;
            }
        }
        let offset = if self.offsets.is_empty() {
            None
        } else {
            let mut o = DMatrix::zeros(q, p);
            for off in &self.offsets {
                let l = spec.index_of(&off.term).ok_or_else(|| cfg(format!("offset for unknown term `{}`", off.term)))?;
                let k = refs.iter().position(|r| *r == CovariateRef::parse(&off.covariate)).expect("collected above");
                if mask[(k, l)] {
                    return Err(cfg(format!("offset on `{}`×`{}` overlaps a free coefficient", off.covariate, off.term)));
                }
                o[(k, l)] = off.value;
            }
            Some(o)
        };
        let template = ParamMatrix::new(DMatrix::zeros(q, p), mask, offset).map_err(|e| cfg(e.to_string()))?;
        let ensemble = Ensemble::new(data.networks.clone(), covariates, spec, data.tags.clone())
            .map_err(|e| cfg(format!("model does not apply to the ensemble: {e}")))?;

        let fit = self.estimation.fit_options()?;
        let d = &self.diagnostics;
        let estimator = match d.estimator.as_str() {
            "total-variance" => VarianceEstimator::TotalVariance,
            "direct" => VarianceEstimator::Direct,
            "direct-adjusted" => VarianceEstimator::DirectAdjusted,
            e => return Err(cfg(format!("unknown variance estimator `{e}`"))),
        };
        let nested = NestedSimPlan { r1: d.r1, r2: d.r2, estimator, seed: fit.inference.seed };
        nested.validate().map_err(|e| cfg(e.to_string()))?;
        let targets = d.targets.iter().map(TargetConfig::resolve).collect::<Result<Vec<_>, _>>()?;
        let candidates = d
            .candidates
            .iter()
            .map(|c| {
                let r = CovariateRef::parse(c);
                Ok((r.label(), r.column(data)?))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let score_targets = d
            .score_targets
            .iter()
            .map(|t| Ok(ScoreTarget { target: t.resolve()?, tags: t.tags.clone() }))
            .collect::<Result<Vec<_>, IoError>>()?;
        let diagnostics = DiagnosticsPlan {
            nested,
            targets,
            candidates,
            size_anova: d.size_anova,
            score_targets,
            score_draws: d.score_draws,
            omnibus: d.omnibus,
        };
        Ok(ModelSetup { ensemble, template, fit, diagnostics })
    }
}
