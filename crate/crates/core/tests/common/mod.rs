#![allow(dead_code)]

use netensemble::graph::Dyad;
use netensemble::inference::enumerate_states;
use netensemble::{Network, StatisticSpec};
use rand::Rng;

/// Exact iid draws of complete `n`-node networks from `exp<θ, g(y)>`.
pub struct ExactSampler {
    n: usize,
    dyads: Vec<Dyad>,
    codes: Vec<u64>,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(n: usize, spec: &StatisticSpec, theta: &[f64]) -> Self {
        let base = Network::new("base", n).unwrap();
        let t = enumerate_states(&base, spec, false, 20).unwrap();
        let lw: Vec<f64> = t
            .states
            .iter()
            .map(|(_, g)| g.iter().zip(theta).map(|(&a, b)| a as f64 * b).sum())
            .collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let cdf = lw
            .iter()
            .map(|l| {
                acc += (l - max).exp();
                acc
            })
            .collect();
        ExactSampler { n, dyads: t.dyads, codes: t.states.iter().map(|(c, _)| *c).collect(), cdf }
    }

    pub fn draw(&self, id: impl Into<String>, rng: &mut impl Rng) -> Network {
        let total = *self.cdf.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let mut net = Network::new(id, self.n).unwrap();
        for (b, &d) in self.dyads.iter().enumerate() {
            if self.codes[k] >> b & 1 == 1 {
                net.set_edge(d, true);
            }
        }
        net
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(ps: &[f64]) -> f64 {
    let mut v = ps.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &p)| ((i as f64 + 1.0) / n - p).abs().max((p - i as f64 / n).abs()))
        .fold(0.0, f64::max)
}
