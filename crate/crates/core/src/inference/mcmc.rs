//! Metropolis toggle sampler and summaries of sampled statistics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{InferenceError, MomentEstimates};
use crate::graph::{Dyad, Network};
use crate::linalg;
use crate::seed::StreamRng;
use crate::stats::{PreparedSpec, StatisticSpec};

/// Burn-in and thinning, as multiples of the number of toggleable dyads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub burnin_factor: f64,
    pub interval_factor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { burnin_factor: 10.0, interval_factor: 1.0 }
    }
}

impl SamplerConfig {
    fn burnin(&self, dyads: usize) -> usize {
        (self.burnin_factor * dyads as f64).ceil() as usize
    }

    fn interval(&self, dyads: usize) -> usize {
        ((self.interval_factor * dyads as f64).ceil() as usize).max(1)
    }
}

/// A single-toggle Metropolis chain targeting `exp<θ, g(y)>` on `Y`, or on
/// `Y(y_obs)` when conditional.
pub struct Chain<'a> {
    net: Network,
    prepared: &'a PreparedSpec,
    theta: Vec<f64>,
    dyads: Vec<Dyad>,
    stats: Vec<i64>,
    delta: Vec<i64>,
    rng: StreamRng,
    accepted: u64,
    proposed: u64,
}

impl<'a> Chain<'a> {
    pub fn new(net: &Network, prepared: &'a PreparedSpec, theta: &[f64], conditional: bool, rng: StreamRng) -> Self {
        let dyads = if conditional { net.free_dyads() } else { net.dyads().collect() };
        let stats = prepared.eval(net);
        Chain {
            net: net.clone(),
            prepared,
            theta: theta.to_vec(),
            dyads,
            delta: vec![0; stats.len()],
            stats,
            rng,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn toggleable(&self) -> usize {
        self.dyads.len()
    }

    pub fn step(&mut self) {
        if self.dyads.is_empty() {
            return;
        }
        let d = self.dyads[self.rng.random_range(0..self.dyads.len())];
        self.prepared.change_into(&self.net, d, &mut self.delta);
        let eta: f64 = self.delta.iter().zip(&self.theta).map(|(&c, &t)| c as f64 * t).sum();
        self.proposed += 1;
        if eta >= 0.0 || self.rng.random::<f64>() < eta.exp() {
            self.net.toggle_dyad(d);
            for (s, c) in self.stats.iter_mut().zip(&self.delta) {
                *s += c;
            }
            self.accepted += 1;
        }
    }

    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn stats(&self) -> &[i64] {
        &self.stats
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposed as f64
    }

    /// Runs burn-in then records `draws` thinned states, handing each
    /// state to `visit`.
    pub fn run(&mut self, draws: usize, cfg: &SamplerConfig, mut visit: impl FnMut(&Network, &[i64])) {
        let m = self.toggleable();
        self.advance(cfg.burnin(m));
        let interval = cfg.interval(m);
        for r in 0..draws {
            if r > 0 {
                self.advance(interval);
            }
            visit(&self.net, &self.stats);
        }
    }
}

/// Sampled statistic vectors, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct StatDraws {
    p: usize,
    data: Vec<f64>,
}

impl StatDraws {
    pub fn new(p: usize) -> Self {
        StatDraws { p, data: Vec::new() }
    }

    pub fn push(&mut self, g: &[i64]) {
        self.data.extend(g.iter().map(|&v| v as f64));
    }

    pub fn push_f64(&mut self, g: &[f64]) {
        self.data.extend_from_slice(g);
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.p).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.p..(r + 1) * self.p]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.data[r * self.p + c]).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let cols: Vec<f64> = (0..self.p).map(|c| linalg::mean(&self.column(c))).collect();
        DVector::from_vec(cols)
    }

    /// Unbiased sample covariance.
    pub fn cov(&self) -> DMatrix<f64> {
        let r = self.len();
        let mean = self.mean();
        let mut cov = DMatrix::zeros(self.p, self.p);
        if r < 2 {
            return cov;
        }
        for i in 0..r {
            let d = DVector::from_column_slice(self.row(i)) - &mean;
            cov += &d * d.transpose();
        }
        cov / (r - 1) as f64
    }

    /// Batch-means estimate of the long-run covariance of the draws.
    pub fn long_run_cov(&self) -> DMatrix<f64> {
        let r = self.len();
        let b = (r as f64).sqrt().floor() as usize;
        if b < 2 {
            return self.cov();
        }
        let m = r / b;
        let mut means = StatDraws::new(self.p);
        for k in 0..b {
            let mut acc = vec![0.0; self.p];
            for i in k * m..(k + 1) * m {
                for (a, v) in acc.iter_mut().zip(self.row(i)) {
                    *a += v;
                }
            }
            means.push_f64(&acc.iter().map(|a| a / m as f64).collect::<Vec<_>>());
        }
        // Never report less than the iid covariance: positively
        // correlated draws only inflate it.
        let lr = means.cov() * m as f64;
        let iid = self.cov();
        DMatrix::from_fn(self.p, self.p, |i, j| {
            if i == j { lr[(i, i)].max(iid[(i, i)]) } else { lr[(i, j)] }
        })
    }

    /// Batch-means Monte Carlo standard errors of the column means.
    pub fn mcse(&self) -> DVector<f64> {
        let r = self.len().max(1) as f64;
        self.long_run_cov().diagonal().map(|v| (v / r).sqrt())
    }

    pub fn moment_estimates(&self, conditional: bool) -> MomentEstimates {
        MomentEstimates {
            mean: self.mean(),
            cov: self.cov(),
            mcse: self.mcse(),
            conditional,
            log_normalizer: None,
        }
    }
}

/// Draws `draws` statistic vectors from a chain seeded with `rng`.
pub fn sample_prepared(
    net: &Network,
    prepared: &PreparedSpec,
    theta: &[f64],
    conditional: bool,
    draws: usize,
    rng: StreamRng,
    cfg: &SamplerConfig,
) -> StatDraws {
    let mut out = StatDraws::new(prepared.p());
    let mut chain = Chain::new(net, prepared, theta, conditional, rng);
    chain.run(draws, cfg, |_, g| out.push(g));
    out
}

/// `draws` statistic vectors from `ERGM(θ)`, restricted to `Y(y_obs)` when
/// conditional. Deterministic given `seed`.
pub fn mcmc_sample(
    net: &Network,
    spec: &StatisticSpec,
    theta: &[f64],
    conditional: bool,
    draws: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<StatDraws, InferenceError> {
    if draws == 0 {
        return Err(InferenceError::Config("draw count must be positive".into()));
    }
    let prepared = spec.prepare(net)?;
    Ok(sample_prepared(net, &prepared, theta, conditional, draws, crate::seed::rng(seed), cfg))
}

/// Draws complete networks (imputing missing dyads when conditional).
pub fn sample_networks(
    net: &Network,
    prepared: &PreparedSpec,
    theta: &[f64],
    conditional: bool,
    draws: usize,
    rng: StreamRng,
    cfg: &SamplerConfig,
) -> Vec<Network> {
    let mut out = Vec::with_capacity(draws);
    let mut chain = Chain::new(net, prepared, theta, conditional, rng);
    chain.run(draws, cfg, |n, _| out.push(n.clone()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::enumerate::enumerate_moments;
    use crate::seed;

    #[test]
    fn matches_enumeration_on_small_network() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let net = Network::new("m", 5).unwrap();
        let theta = [-0.4, 0.1, 0.2];
        let exact = enumerate_moments(&net, &spec, &theta, false, 20).unwrap();
        let mc = mcmc_sample(&net, &spec, &theta, false, 20_000, 3, &SamplerConfig::default())
            .unwrap()
            .moment_estimates(false);
        for c in 0..3 {
            let z = (mc.mean[c] - exact.mean[c]) / mc.mcse[c];
            assert!(z.abs() < 4.5, "coordinate {c}: z = {z}");
        }
    }

    #[test]
    fn conditional_chain_never_touches_observed() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let mut net = Network::from_edges("m", 5, &[(0, 1), (0, 2)]).unwrap();
        net.set_egocentric(0).unwrap();
        let prepared = spec.prepare(&net).unwrap();
        let nets = sample_networks(&net, &prepared, &[0.0; 3], true, 200, seed::rng(1), &SamplerConfig::default());
        for s in &nets {
            for d in net.dyads().filter(|&d| !net.is_missing(d)) {
                assert_eq!(s.has_edge(d), net.has_edge(d));
            }
        }
    }

    #[test]
    fn chain_stats_track_the_network() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let net = Network::new("m", 6).unwrap();
        let prepared = spec.prepare(&net).unwrap();
        let mut chain = Chain::new(&net, &prepared, &[0.2, -0.1, 0.3], false, seed::rng(9));
        for _ in 0..50 {
            chain.advance(17);
            assert_eq!(chain.stats(), prepared.eval(chain.network()).as_slice());
        }
        assert!(chain.acceptance_rate() > 0.0);
    }

    #[test]
    fn uniform_edge_mean() {
        let spec = StatisticSpec::from_terms([crate::stats::Term::Edges]).unwrap();
        let net = Network::new("u", 6).unwrap();
        let d = mcmc_sample(&net, &spec, &[0.0], false, 4000, 11, &SamplerConfig::default()).unwrap();
        assert!((d.mean()[0] - 7.5).abs() < 4.0 * d.mcse()[0]);
    }

    #[test]
    fn strongly_negative_edges_empty() {
        let spec = StatisticSpec::edges_twostars_triangles();
        let net = Network::complete("e", 5).unwrap();
        let d = mcmc_sample(&net, &spec, &[-30.0, 0.0, 0.0], false, 200, 5, &SamplerConfig::default()).unwrap();
        assert_eq!(d.mean().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_means_not_below_iid() {
        let mut d = StatDraws::new(1);
        for k in 0..400 {
            d.push_f64(&[(k / 20) as f64]);
        }
        let iid = (d.cov()[(0, 0)] / 400.0).sqrt();
        assert!(d.mcse()[0] > 2.0 * iid);
    }
}
