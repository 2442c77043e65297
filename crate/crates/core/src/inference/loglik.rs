//! Face-value log-likelihood, exact or by path sampling from the zero model.

use rayon::prelude::*;

use super::enumerate::{build_tables, TableRequest};
use super::mcmc::sample_prepared;
use super::{InferenceError, InferenceOptions};
use crate::graph::Network;
use crate::linalg;
use crate::model::{Ensemble, ParamMatrix};
use crate::seed::{self, Purpose};
use crate::stats::PreparedSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    /// Zero when exact.
    pub mcse: f64,
}

/// `(AIC, BIC)` for `k` free parameters and `n_obs` observed dyads.
pub fn information_criteria(loglik: f64, k: usize, n_obs: usize) -> (f64, f64) {
    let aic = -2.0 * loglik + 2.0 * k as f64;
    let bic = -2.0 * loglik + k as f64 * (n_obs.max(1) as f64).ln();
    (aic, bic)
}

/// `log Σ exp<θ, g>` over `Y` (or `Y(y_obs)`) by thermodynamic
/// integration along `tθ`, `t ∈ [0, 1]`, with Simpson weights.
#[allow(clippy::too_many_arguments)]
pub(crate) fn path_log_normalizer(
    net: &Network,
    prepared: &PreparedSpec,
    theta: &[f64],
    conditional: bool,
    intervals: usize,
    opts: &InferenceOptions,
    stream: u64,
) -> (f64, f64) {
    let dyads = if conditional { net.free_count() } else { net.num_dyads() };
    let base = dyads as f64 * std::f64::consts::LN_2;
    if dyads == 0 || theta.iter().all(|&t| t == 0.0) {
        let g = prepared.eval(net);
        let eta: f64 = if dyads == 0 { g.iter().zip(theta).map(|(&g, &t)| g as f64 * t).sum() } else { 0.0 };
        return (base + eta, 0.0);
    }
    let j_max = intervals.max(2).div_ceil(2) * 2;
    let mut value = 0.0;
    let mut var = 0.0;
    let th = nalgebra::DVector::from_column_slice(theta);
    for j in 0..=j_max {
        let t = j as f64 / j_max as f64;
        let w = if j == 0 || j == j_max {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        } / (3.0 * j_max as f64);
        let scaled: Vec<f64> = theta.iter().map(|v| v * t).collect();
        let rng = seed::stream(opts.seed, net.id(), Purpose::PathSampling, stream * 1024 + j as u64);
        let draws = sample_prepared(net, prepared, &scaled, conditional, opts.draws, rng, &opts.sampler);
        let mean = draws.mean();
        let lr = draws.long_run_cov();
        value += w * th.dot(&mean);
        var += w * w * (th.transpose() * &lr * &th)[(0, 0)] / draws.len() as f64;
    }
    (base + value, var.max(0.0).sqrt())
}

/// Path-sampling grid size.
pub const DEFAULT_PATH_INTERVALS: usize = 20;

/// Ensemble log-likelihood `Σ_s [log κ_s(θ_s | y_obs) − log κ_s(θ_s)]`.
pub fn loglik_at(ens: &Ensemble, b: &ParamMatrix, opts: &InferenceOptions) -> Result<LogLik, InferenceError> {
    loglik_with_intervals(ens, b, opts, DEFAULT_PATH_INTERVALS)
}

pub fn loglik_with_intervals(
    ens: &Ensemble,
    b: &ParamMatrix,
    opts: &InferenceOptions,
    intervals: usize,
) -> Result<LogLik, InferenceError> {
    let cap = opts.cap();
    let want = TableRequest { unconditional: true, conditional: true, patterns: false };
    let tables = build_tables(ens.networks(), ens.spec(), cap, want)?;
    let parts: Vec<(f64, f64)> = (0..ens.len())
        .into_par_iter()
        .map(|s| {
            let net = ens.network(s);
            let theta: Vec<f64> = ens.theta(b, s)?.iter().copied().collect();
            let prepared = ens.spec().prepare(net)?;
            let t = &tables[s];
            let (lu, vu) = match &t.unconditional {
                Some(h) => (h.log_partition(&theta), 0.0),
                None => path_log_normalizer(net, &prepared, &theta, false, intervals, opts, 0),
            };
            let (lc, vc) = if net.is_fully_observed() {
                let g = prepared.eval(net);
                (g.iter().zip(&theta).map(|(&g, t)| g as f64 * t).sum(), 0.0)
            } else {
                match &t.conditional {
                    Some(h) => (h.log_partition(&theta), 0.0),
                    None => path_log_normalizer(net, &prepared, &theta, true, intervals, opts, 1),
                }
            };
            let sd = (vu * vu + vc * vc).sqrt();
            Ok::<_, InferenceError>((lc - lu, sd * sd))
        })
        .collect::<Result<_, _>>()?;
    let values: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let vars: Vec<f64> = parts.iter().map(|p| p.1).collect();
    Ok(LogLik { value: linalg::pairwise_sum(&values), mcse: linalg::pairwise_sum(&vars).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::StatisticSpec;

    #[test]
    fn zero_model_is_uniform() {
        let nets = vec![Network::from_edges("a", 4, &[(0, 1)]).unwrap(), Network::new("b", 5).unwrap()];
        let ens = Ensemble::simple(nets, StatisticSpec::edges_twostars_triangles()).unwrap();
        let ll = loglik_at(&ens, &ParamMatrix::zeros(1, 3), &InferenceOptions::default()).unwrap();
        assert!((ll.value + 16.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(ll.mcse, 0.0);
    }

    #[test]
    fn one_missing_dyad() {
        let mut n = Network::new("a", 3).unwrap();
        n.set_missing(n.dyad(1, 2).unwrap(), true);
        let ens = Ensemble::simple(vec![n], StatisticSpec::edges_twostars_triangles()).unwrap();
        let ll = loglik_at(&ens, &ParamMatrix::zeros(1, 3), &InferenceOptions::default()).unwrap();
        assert!((ll.value + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn path_sampling_tracks_exact() {
        let n = Network::from_edges("a", 5, &[(0, 1), (1, 2), (2, 0), (3, 4)]).unwrap();
        let ens = Ensemble::simple(vec![n], StatisticSpec::edges_twostars_triangles()).unwrap();
        let b = ParamMatrix::from_theta(&[-0.5, 0.05, 0.3]);
        let exact = loglik_at(&ens, &b, &InferenceOptions::default()).unwrap();
        let opts = InferenceOptions { force_mcmc: true, draws: 4000, ..Default::default() };
        let mc = loglik_at(&ens, &b, &opts).unwrap();
        assert!(mc.mcse > 0.0);
        assert!((mc.value - exact.value).abs() < 4.0 * mc.mcse + 0.02, "{} vs {} ± {}", mc.value, exact.value, mc.mcse);
    }

    #[test]
    fn aic_definition() {
        let (aic, bic) = information_criteria(-10.0, 3, 100);
        assert_eq!(aic, 26.0);
        assert!((bic - (20.0 + 3.0 * 100f64.ln())).abs() < 1e-12);
    }
}
