//! Nested simulation: complete networks from the model, then the
//! conditional distribution given each draw's observed part.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::enumerate::conditional_histogram;
use super::mcmc::{sample_networks, sample_prepared, SamplerConfig, StatDraws};
use crate::graph::Network;
use crate::seed::{self, Purpose};
use crate::stats::PreparedSpec;

/// Replicate counts: `r1` outer draws, `r2` inner draws per outer draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedPlan {
    pub r1: usize,
    pub r2: usize,
}

impl Default for NestedPlan {
    fn default() -> Self {
        NestedPlan { r1: 500, r2: 50 }
    }
}

/// Conditional moments for one outer draw.
#[derive(Debug, Clone)]
pub enum Inner {
    Draws(StatDraws),
    Exact { mean: DVector<f64>, cov: DMatrix<f64> },
}

impl Inner {
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Inner::Draws(d) => d.mean(),
            Inner::Exact { mean, .. } => mean.clone(),
        }
    }

    /// Within-replicate covariance (unbiased for draws).
    pub fn cov(&self) -> DMatrix<f64> {
        match self {
            Inner::Draws(d) => d.cov(),
            Inner::Exact { cov, .. } => cov.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NestedSample {
    /// Statistics of each outer complete draw.
    pub outer: StatDraws,
    pub inner: Vec<Inner>,
    pub r2: usize,
}

/// Runs the nested simulation for one network. Inner moments are exact
/// whenever the free dyads fit within `cap`.
#[allow(clippy::too_many_arguments)]
pub fn nested_sample(
    net: &Network,
    prepared: &PreparedSpec,
    theta: &[f64],
    plan: NestedPlan,
    seed: u64,
    index: u64,
    cfg: &SamplerConfig,
    cap: usize,
) -> NestedSample {
    let outer_rng = seed::stream(seed, net.id(), Purpose::ResidualOuter, index);
    let outer_nets = sample_networks(net, prepared, theta, false, plan.r1, outer_rng, cfg);
    let exact_inner = net.free_count() <= cap;
    let mut outer = StatDraws::new(prepared.p());
    let mut inner = Vec::with_capacity(plan.r1);
    let mut memo: HashMap<Vec<bool>, Inner> = HashMap::new();
    for (r, y) in outer_nets.into_iter().enumerate() {
        let mut masked = y;
        for d in net.free_dyads() {
            masked.set_missing(d, true);
        }
        outer.push(&prepared.eval(&masked));
        if exact_inner {
            let key: Vec<bool> = masked.dyads().filter(|&d| !masked.is_missing(d)).map(|d| masked.has_edge(d)).collect();
            let entry = memo.entry(key).or_insert_with(|| {
                let h = conditional_histogram(&masked, prepared, cap).expect("within cap");
                let m = h.moments(theta);
                Inner::Exact { mean: m.mean, cov: m.cov }
            });
            inner.push(entry.clone());
        } else {
            let inner_rng = seed::stream(seed, net.id(), Purpose::ResidualInner, index.wrapping_mul(1 << 20) ^ r as u64);
            inner.push(Inner::Draws(sample_prepared(&masked, prepared, theta, true, plan.r2, inner_rng, cfg)));
        }
    }
    NestedSample { outer, inner, r2: plan.r2 }
}

fn cov_of(vs: &[DVector<f64>]) -> DMatrix<f64> {
    let p = vs.first().map_or(0, |v| v.len());
    let mut d = StatDraws::new(p);
    for v in vs {
        d.push_f64(v.as_slice());
    }
    d.cov()
}

impl NestedSample {
    /// Restricts to statistic `c`, multiplied by `scale`.
    pub fn project(&self, c: usize, scale: f64) -> NestedSample {
        let col = |d: &StatDraws| {
            let mut out = StatDraws::new(1);
            for r in 0..d.len() {
                out.push_f64(&[d.row(r)[c] * scale]);
            }
            out
        };
        let inner = self
            .inner
            .iter()
            .map(|i| match i {
                Inner::Draws(d) => Inner::Draws(col(d)),
                Inner::Exact { mean, cov } => Inner::Exact {
                    mean: DVector::from_element(1, mean[c] * scale),
                    cov: DMatrix::from_element(1, 1, cov[(c, c)] * scale * scale),
                },
            })
            .collect();
        NestedSample { outer: col(&self.outer), inner, r2: self.r2 }
    }

    pub fn r1(&self) -> usize {
        self.inner.len()
    }

    fn inner_means(&self) -> Vec<DVector<f64>> {
        self.inner.iter().map(Inner::mean).collect()
    }

    fn mean_within(&self) -> DMatrix<f64> {
        let p = self.outer.p();
        let mut acc = DMatrix::zeros(p, p);
        for i in &self.inner {
            acc += i.cov();
        }
        acc / self.inner.len().max(1) as f64
    }

    fn all_exact(&self) -> bool {
        self.inner.iter().all(|i| matches!(i, Inner::Exact { .. }))
    }

    /// Sample covariance of the inner means.
    pub fn direct(&self) -> DMatrix<f64> {
        cov_of(&self.inner_means())
    }

    /// Direct estimate with the inner-sampling noise subtracted.
    pub fn direct_adjusted(&self) -> DMatrix<f64> {
        if self.all_exact() {
            return self.direct();
        }
        self.direct() - self.mean_within() / self.r2 as f64
    }

    /// Pooled covariance of all inner draws minus the mean within-replicate
    /// covariance.
    pub fn total_variance(&self) -> DMatrix<f64> {
        if self.all_exact() {
            return self.direct();
        }
        let mut pooled = StatDraws::new(self.outer.p());
        for i in &self.inner {
            if let Inner::Draws(d) = i {
                for r in 0..d.len() {
                    pooled.push_f64(d.row(r));
                }
            }
        }
        pooled.cov() - self.mean_within()
    }
}
