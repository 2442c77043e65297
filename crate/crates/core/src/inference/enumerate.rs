//! Exact enumeration over complete or constrained sample spaces.
//!
//! States are visited in Gray-code order so each step is a single toggle
//! and statistics are updated by change statistics. Enumerated states are
//! compressed into histograms of distinct statistic vectors, which is all
//! the moment computations need.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InferenceError, MomentEstimates};
use crate::graph::{Dyad, Network};
use crate::stats::{PreparedSpec, StatisticSpec};

/// Default limit on the number of enumerated dyads per network.
pub const DEFAULT_ENUM_CAP: usize = 20;

/// Distinct statistic vectors with their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistogram {
    p: usize,
    stats: Vec<i64>,
    counts: Vec<f64>,
}

/// Moments of a histogram under `exp<θ, g>` weights.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    pub log_z: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl StateHistogram {
    fn from_map(p: usize, map: HashMap<Vec<i64>, u64>) -> Self {
        let mut rows: Vec<(Vec<i64>, u64)> = map.into_iter().collect();
        rows.sort();
        let mut stats = Vec::with_capacity(rows.len() * p);
        let mut counts = Vec::with_capacity(rows.len());
        for (g, c) in rows {
            stats.extend_from_slice(&g);
            counts.push(c as f64);
        }
        StateHistogram { p, stats, counts }
    }

    /// Histogram with a single state.
    pub fn point(g: &[i64]) -> Self {
        StateHistogram { p: g.len(), stats: g.to_vec(), counts: vec![1.0] }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.stats[r * self.p..(r + 1) * self.p]
    }

    pub fn count(&self, r: usize) -> f64 {
        self.counts[r]
    }

    pub fn total_states(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Per-coordinate minimum and maximum over states.
    pub fn range(&self) -> (Vec<i64>, Vec<i64>) {
        let mut lo = vec![i64::MAX; self.p];
        let mut hi = vec![i64::MIN; self.p];
        for r in 0..self.len() {
            for (c, &v) in self.row(r).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        (lo, hi)
    }

    fn log_weights(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        let lw: Vec<f64> = (0..self.len())
            .map(|r| {
                let eta: f64 = self.row(r).iter().zip(theta).map(|(&g, &t)| g as f64 * t).sum();
                eta + self.counts[r].ln()
            })
            .collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lw, max)
    }

    pub fn log_partition(&self, theta: &[f64]) -> f64 {
        let (lw, max) = self.log_weights(theta);
        max + lw.iter().map(|w| (w - max).exp()).sum::<f64>().ln()
    }

    pub fn moments(&self, theta: &[f64]) -> ExactMoments {
        let p = self.p;
        let (lw, max) = self.log_weights(theta);
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut mean = DVector::zeros(p);
        for (r, wr) in w.iter().enumerate() {
            for (c, &g) in self.row(r).iter().enumerate() {
                mean[c] += wr * g as f64;
            }
        }
        mean /= total;
        let mut cov = DMatrix::zeros(p, p);
        for (r, wr) in w.iter().enumerate() {
            let d: Vec<f64> = self.row(r).iter().zip(mean.iter()).map(|(&g, m)| g as f64 - m).collect();
            for a in 0..p {
                for b in 0..=a {
                    cov[(a, b)] += wr * d[a] * d[b];
                }
            }
        }
        cov /= total;
        for a in 0..p {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        ExactMoments { log_z: max + total.ln(), mean, cov }
    }
}

/// Walks all `2^m` assignments of `dyads` starting from all-absent,
/// calling `visit(code, stats)` where bit `b` of `code` is dyad `b`.
pub(crate) fn gray_walk(
    net: &Network,
    prepared: &PreparedSpec,
    dyads: &[Dyad],
    mut visit: impl FnMut(u64, &[i64]),
) {
    let mut scratch = net.clone();
    for &d in dyads {
        scratch.set_edge(d, false);
    }
    let mut stats = prepared.eval(&scratch);
    let mut delta = vec![0; stats.len()];
    let mut code = 0u64;
    visit(code, &stats);
    let m = dyads.len();
    for k in 1u64..(1u64 << m) {
        let b = k.trailing_zeros() as usize;
        let d = dyads[b];
        prepared.change_into(&scratch, d, &mut delta);
        for (s, dl) in stats.iter_mut().zip(&delta) {
            *s += dl;
        }
        scratch.toggle_dyad(d);
        code ^= 1 << b;
        visit(code, &stats);
    }
}

fn check_cap(dyads: usize, cap: usize) -> Result<(), InferenceError> {
    if dyads > cap || dyads >= 63 {
        return Err(InferenceError::EnumerationCap { dyads, cap });
    }
    Ok(())
}

fn histogram_over(net: &Network, prepared: &PreparedSpec, dyads: &[Dyad]) -> StateHistogram {
    let mut map: HashMap<Vec<i64>, u64> = HashMap::new();
    gray_walk(net, prepared, dyads, |_, g| match map.get_mut(g) {
        Some(c) => *c += 1,
        None => {
            map.insert(g.to_vec(), 1);
        }
    });
    StateHistogram::from_map(prepared.p(), map)
}

/// Histogram over the full sample space `Y`.
pub fn unconditional_histogram(
    net: &Network,
    prepared: &PreparedSpec,
    cap: usize,
) -> Result<StateHistogram, InferenceError> {
    check_cap(net.num_dyads(), cap)?;
    let all: Vec<Dyad> = net.dyads().collect();
    Ok(histogram_over(net, prepared, &all))
}

/// Histogram over `Y(y_obs)`: observed dyads fixed, missing dyads free.
pub fn conditional_histogram(
    net: &Network,
    prepared: &PreparedSpec,
    cap: usize,
) -> Result<StateHistogram, InferenceError> {
    let free = net.free_dyads();
    check_cap(free.len(), cap)?;
    Ok(histogram_over(net, prepared, &free))
}

/// Sample space grouped by the values of the observed dyads.
#[derive(Debug, Clone)]
pub struct PatternTable {
    /// Observed dyads in bit order of `patterns[..].0`.
    pub observed: Vec<Dyad>,
    /// `(pattern code, histogram over completions)`, sorted by code.
    pub patterns: Vec<(u64, StateHistogram)>,
}

/// Per-pattern summary under one `θ`.
#[derive(Debug, Clone)]
pub struct PatternMoments {
    pub code: u64,
    pub prob: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Pieces of the law of total variance for one network under its mask.
#[derive(Debug, Clone)]
pub struct FisherDecomposition {
    /// `Σ(θ)`.
    pub total_cov: DMatrix<f64>,
    /// `E_Y[Σ(θ | obs(Y))]`.
    pub expected_cond_cov: DMatrix<f64>,
    /// `Var_Y[μ(θ | obs(Y))]`.
    pub var_cond_mean: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl PatternTable {
    pub fn build(net: &Network, prepared: &PreparedSpec, cap: usize) -> Result<Self, InferenceError> {
        check_cap(net.num_dyads(), cap)?;
        let free = net.free_dyads();
        let observed: Vec<Dyad> = net.dyads().filter(|&d| !net.is_missing(d)).collect();
        let order: Vec<Dyad> = free.iter().chain(&observed).copied().collect();
        let shift = free.len();
        let mut maps: HashMap<u64, HashMap<Vec<i64>, u64>> = HashMap::new();
        gray_walk(net, prepared, &order, |code, g| {
            let map = maps.entry(code >> shift).or_default();
            match map.get_mut(g) {
                Some(c) => *c += 1,
                None => {
                    map.insert(g.to_vec(), 1);
                }
            }
        });
        let mut patterns: Vec<(u64, StateHistogram)> = maps
            .into_iter()
            .map(|(code, m)| (code, StateHistogram::from_map(prepared.p(), m)))
            .collect();
        patterns.sort_by_key(|(c, _)| *c);
        Ok(PatternTable { observed, patterns })
    }

    /// Code of the pattern actually observed in `net`.
    pub fn observed_code(&self, net: &Network) -> u64 {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &d)| net.has_edge(d))
            .fold(0u64, |acc, (b, _)| acc | 1 << b)
    }

    pub fn pattern_moments(&self, theta: &[f64]) -> Vec<PatternMoments> {
        let parts: Vec<(u64, ExactMoments)> =
            self.patterns.iter().map(|(c, h)| (*c, h.moments(theta))).collect();
        let max = parts.iter().map(|(_, m)| m.log_z).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = parts.iter().map(|(_, m)| (m.log_z - max).exp()).sum();
        parts
            .into_iter()
            .map(|(code, m)| PatternMoments {
                code,
                prob: (m.log_z - max).exp() / total,
                mean: m.mean,
                cov: m.cov,
            })
            .collect()
    }

    pub fn decomposition(&self, theta: &[f64]) -> FisherDecomposition {
        let pm = self.pattern_moments(theta);
        let p = self.patterns.first().map_or(0, |(_, h)| h.p());
        let mut mean = DVector::zeros(p);
        let mut ecov = DMatrix::zeros(p, p);
        for m in &pm {
            mean += &m.mean * m.prob;
            ecov += &m.cov * m.prob;
        }
        let mut vmean = DMatrix::zeros(p, p);
        for m in &pm {
            let d = &m.mean - &mean;
            vmean += &d * d.transpose() * m.prob;
        }
        let total_cov = &ecov + &vmean;
        FisherDecomposition { total_cov, expected_cond_cov: ecov, var_cond_mean: vmean, mean }
    }
}

/// Exact `μ`, `Σ` (or their conditional versions given the observed dyads).
pub fn enumerate_moments(
    net: &Network,
    spec: &StatisticSpec,
    theta: &[f64],
    conditional: bool,
    cap: usize,
) -> Result<MomentEstimates, InferenceError> {
    let prepared = spec.prepare(net)?;
    let hist = if conditional {
        conditional_histogram(net, &prepared, cap)?
    } else {
        unconditional_histogram(net, &prepared, cap)?
    };
    let m = hist.moments(theta);
    Ok(MomentEstimates {
        mcse: DVector::zeros(m.mean.len()),
        mean: m.mean,
        cov: m.cov,
        conditional,
        log_normalizer: Some(m.log_z),
    })
}

/// Every enumerated state with its statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationTable {
    pub dyads: Vec<Dyad>,
    /// `(state code, statistics)`; bit `b` of the code is `dyads[b]`.
    pub states: Vec<(u64, Vec<i64>)>,
}

impl EnumerationTable {
    /// Adjacency of each enumerated dyad in a state, in `dyads` order.
    pub fn bits(&self, code: u64) -> Vec<bool> {
        (0..self.dyads.len()).map(|b| code >> b & 1 == 1).collect()
    }
}

/// States ordered by edge count, then lexicographically with the first
/// dyad most significant.
pub fn enumerate_states(
    net: &Network,
    spec: &StatisticSpec,
    conditional: bool,
    cap: usize,
) -> Result<EnumerationTable, InferenceError> {
    let prepared = spec.prepare(net)?;
    let dyads = if conditional { net.free_dyads() } else { net.dyads().collect() };
    check_cap(dyads.len(), cap)?;
    let mut states = Vec::with_capacity(1 << dyads.len());
    gray_walk(net, &prepared, &dyads, |code, g| states.push((code, g.to_vec())));
    let m = dyads.len();
    let lex = |code: u64| (0..m).fold(0u64, |acc, b| acc << 1 | (code >> b & 1));
    states.sort_by_key(|(code, _)| (code.count_ones(), lex(*code)));
    Ok(EnumerationTable { dyads, states })
}

/// One row of a conditional-expectation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow {
    pub prob: f64,
    pub observed_values: Vec<bool>,
    pub mean: Vec<f64>,
}

/// `Pr(obs(Y) = o)` and `μ(θ | o)` for every observed-dyad pattern `o`,
/// ordered lexicographically with the first observed dyad most significant.
pub fn conditional_expectation_table(
    net: &Network,
    spec: &StatisticSpec,
    theta: &[f64],
    cap: usize,
) -> Result<(Vec<Dyad>, Vec<ConditionalRow>), InferenceError> {
    let prepared = spec.prepare(net)?;
    let table = PatternTable::build(net, &prepared, cap)?;
    let m = table.observed.len();
    let lex = |code: u64| (0..m).fold(0u64, |acc, b| acc << 1 | (code >> b & 1));
    let mut rows: Vec<(u64, ConditionalRow)> = table
        .pattern_moments(theta)
        .into_iter()
        .map(|pm| {
            (
                lex(pm.code),
                ConditionalRow {
                    prob: pm.prob,
                    observed_values: (0..m).map(|b| pm.code >> b & 1 == 1).collect(),
                    mean: pm.mean.iter().copied().collect(),
                },
            )
        })
        .collect();
    rows.sort_by_key(|(k, _)| *k);
    Ok((table.observed, rows.into_iter().map(|(_, r)| r).collect()))
}

/// Exact tables for one network, shared between identical networks.
#[derive(Debug, Clone, Default)]
pub struct NetworkTables {
    pub unconditional: Option<Arc<StateHistogram>>,
    pub conditional: Option<Arc<StateHistogram>>,
    pub patterns: Option<Arc<PatternTable>>,
}

/// Which tables [`build_tables`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRequest {
    pub unconditional: bool,
    pub conditional: bool,
    pub patterns: bool,
}

type CondKey = (PreparedSpec, Vec<u64>, Vec<u64>);

/// Builds the requested exact tables for every network within `cap`,
/// computing each distinct table once.
pub fn build_tables(
    nets: &[Network],
    spec: &StatisticSpec,
    cap: usize,
    want: TableRequest,
) -> Result<Vec<NetworkTables>, InferenceError> {
    use rayon::prelude::*;

    let prepared: Vec<PreparedSpec> =
        nets.iter().map(|n| spec.prepare(n)).collect::<Result<_, _>>()?;

    let mut ukeys: Vec<PreparedSpec> = Vec::new();
    let mut ckeys: Vec<CondKey> = Vec::new();
    let mut pkeys: Vec<(PreparedSpec, Vec<u64>)> = Vec::new();
    let mut uidx: HashMap<PreparedSpec, usize> = HashMap::new();
    let mut cidx: HashMap<CondKey, usize> = HashMap::new();
    let mut pidx: HashMap<(PreparedSpec, Vec<u64>), usize> = HashMap::new();
    let mut slots = Vec::with_capacity(nets.len());
    for (net, prep) in nets.iter().zip(&prepared) {
        let d = net.num_dyads();
        let f = net.free_count();
        let u = (want.unconditional && d <= cap).then(|| {
            *uidx.entry(prep.clone()).or_insert_with(|| {
                ukeys.push(prep.clone());
                ukeys.len() - 1
            })
        });
        let c = (want.conditional && f > 0 && f <= cap).then(|| {
            let obs: Vec<u64> = net
                .adjacency_words()
                .iter()
                .zip(net.missing_words())
                .map(|(a, m)| a & !m)
                .collect();
            let key = (prep.clone(), net.missing_words().to_vec(), obs);
            *cidx.entry(key.clone()).or_insert_with(|| {
                ckeys.push(key);
                ckeys.len() - 1
            })
        });
        let pt = (want.patterns && f > 0 && d <= cap).then(|| {
            let key = (prep.clone(), net.missing_words().to_vec());
            *pidx.entry(key.clone()).or_insert_with(|| {
                pkeys.push(key);
                pkeys.len() - 1
            })
        });
        slots.push((u, c, pt));
    }

    let first = |pred: &dyn Fn(&Network, &PreparedSpec) -> bool| {
        nets.iter().zip(&prepared).position(|(n, p)| pred(n, p)).unwrap()
    };
    let urep: Vec<usize> = ukeys.iter().map(|k| first(&|_, p| p == k)).collect();
    let crep: Vec<usize> = ckeys
        .iter()
        .map(|(k, m, o)| {
            first(&|n, p| {
                p == k
                    && n.missing_words() == m.as_slice()
                    && n.adjacency_words().iter().zip(n.missing_words()).map(|(a, mm)| a & !mm).eq(o.iter().copied())
            })
        })
        .collect();
    let prep_rep: Vec<usize> =
        pkeys.iter().map(|(k, m)| first(&|n, p| p == k && n.missing_words() == m.as_slice())).collect();

    let utables: Vec<Arc<StateHistogram>> = urep
        .par_iter()
        .map(|&s| unconditional_histogram(&nets[s], &prepared[s], cap).map(Arc::new))
        .collect::<Result<_, _>>()?;
    let ctables: Vec<Arc<StateHistogram>> = crep
        .par_iter()
        .map(|&s| conditional_histogram(&nets[s], &prepared[s], cap).map(Arc::new))
        .collect::<Result<_, _>>()?;
    let ptables: Vec<Arc<PatternTable>> = prep_rep
        .par_iter()
        .map(|&s| PatternTable::build(&nets[s], &prepared[s], cap).map(Arc::new))
        .collect::<Result<_, _>>()?;

    Ok(slots
        .into_iter()
        .map(|(u, c, pt)| NetworkTables {
            unconditional: u.map(|k| utables[k].clone()),
            conditional: c.map(|k| ctables[k].clone()),
            patterns: pt.map(|k| ptables[k].clone()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ett() -> StatisticSpec {
        StatisticSpec::edges_twostars_triangles()
    }

    #[test]
    fn three_node_null_moments() {
        let net = Network::new("t", 3).unwrap();
        let m = enumerate_moments(&net, &ett(), &[0.0; 3], false, 20).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.5, 0.75, 0.125]);
        let expect = DMatrix::from_row_slice(3, 3, &[48.0, 48.0, 12.0, 48.0, 60.0, 18.0, 12.0, 18.0, 7.0]) / 64.0;
        assert_abs_diff_eq!(m.cov, expect, epsilon = 1e-15);
        assert_abs_diff_eq!(m.log_normalizer.unwrap(), 8f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn conditional_on_two_absent_observed_dyads() {
        let mut net = Network::new("t", 3).unwrap();
        net.set_missing(net.dyad(1, 2).unwrap(), true);
        let m = enumerate_moments(&net, &ett(), &[0.0; 3], true, 20).unwrap();
        assert_eq!(m.mean.as_slice(), &[0.5, 0.0, 0.0]);
    }

    #[test]
    fn fully_observed_conditional_is_degenerate() {
        let net = Network::from_edges("t", 4, &[(0, 1), (2, 3)]).unwrap();
        let m = enumerate_moments(&net, &ett(), &[0.3, -0.1, 0.2], true, 20).unwrap();
        assert_eq!(m.cov, DMatrix::zeros(3, 3));
        assert_eq!(m.mean.as_slice(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let net = Network::new("big", 7).unwrap();
        assert!(matches!(
            enumerate_moments(&net, &ett(), &[0.0; 3], false, 20),
            Err(InferenceError::EnumerationCap { dyads: 21, cap: 20 })
        ));
    }

    #[test]
    fn table_b1_order() {
        let net = Network::new("t", 3).unwrap();
        let t = enumerate_states(&net, &ett(), false, 20).unwrap();
        let rows: Vec<(Vec<bool>, Vec<i64>)> = t.states.iter().map(|(c, g)| (t.bits(*c), g.clone())).collect();
        let b = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<_>>();
        assert_eq!(rows[0], (b("000"), vec![0, 0, 0]));
        assert_eq!(rows[1], (b("001"), vec![1, 0, 0]));
        assert_eq!(rows[3], (b("100"), vec![1, 0, 0]));
        assert_eq!(rows[4], (b("011"), vec![2, 1, 0]));
        assert_eq!(rows[7], (b("111"), vec![3, 3, 1]));
    }

    #[test]
    fn table_b2_rows() {
        let mut net = Network::new("t", 3).unwrap();
        net.set_missing(net.dyad(1, 2).unwrap(), true);
        let (obs, rows) = conditional_expectation_table(&net, &ett(), &[0.0; 3], 20).unwrap();
        assert_eq!(obs, vec![Dyad { i: 0, j: 1 }, Dyad { i: 0, j: 2 }]);
        let means: Vec<Vec<f64>> = rows.iter().map(|r| r.mean.clone()).collect();
        assert_eq!(means, vec![vec![0.5, 0.0, 0.0], vec![1.5, 0.5, 0.0], vec![1.5, 0.5, 0.0], vec![2.5, 2.0, 0.5]]);
        assert!(rows.iter().all(|r| r.prob == 0.25));
        assert_eq!(rows[1].observed_values, vec![false, true]);
    }

    #[test]
    fn egocentric_fisher_matrix() {
        let mut net = Network::new("t", 3).unwrap();
        net.set_missing(net.dyad(1, 2).unwrap(), true);
        let table = PatternTable::build(&net, &ett().prepare(&net).unwrap(), 20).unwrap();
        let dec = table.decomposition(&[0.0; 3]);
        let expect = DMatrix::from_row_slice(3, 3, &[32.0, 32.0, 8.0, 32.0, 36.0, 10.0, 8.0, 10.0, 3.0]) / 64.0;
        assert_abs_diff_eq!(dec.var_cond_mean, expect, epsilon = 1e-15);
        assert!(dec.var_cond_mean.determinant().abs() < 1e-15);
    }

    #[test]
    fn histogram_dedupes() {
        let net = Network::new("t", 4).unwrap();
        let h = unconditional_histogram(&net, &ett().prepare(&net).unwrap(), 20).unwrap();
        assert_eq!(h.total_states(), 64.0);
        // 11 isomorphism classes on 4 nodes, some sharing statistics
        assert!(h.len() <= 11);
    }

    #[test]
    fn shared_tables_for_identical_networks() {
        let mut a = Network::new("a", 4).unwrap();
        a.set_egocentric(0).unwrap();
        let mut b = a.clone();
        b.set_id("b");
        let c = Network::new("c", 3).unwrap();
        let want = TableRequest { unconditional: true, conditional: true, patterns: true };
        let tables = build_tables(&[a, b, c], &ett(), 20, want).unwrap();
        assert!(Arc::ptr_eq(tables[0].unconditional.as_ref().unwrap(), tables[1].unconditional.as_ref().unwrap()));
        assert!(Arc::ptr_eq(tables[0].patterns.as_ref().unwrap(), tables[1].patterns.as_ref().unwrap()));
        assert!(tables[2].conditional.is_none() && tables[2].patterns.is_none());
    }
}
