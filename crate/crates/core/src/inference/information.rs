//! Observed and Fisher information for the ensemble.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::enumerate::{build_tables, TableRequest};
use super::mcmc::sample_prepared;
use super::nested::nested_sample;
use super::{InferenceError, InferenceOptions};
use crate::linalg;
use crate::model::{lift_matrix, Ensemble, ParamMatrix};
use crate::seed::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfoMode {
    /// `Σ(θ) − Σ(θ | y_obs)` at the observed data.
    Observed,
    /// `Var_Y[μ(θ | obs(Y))]`, the expected information under the mask.
    Fisher,
}

/// Per-network `p×p` matrices `M_s` for the chosen mode.
pub fn information_blocks(
    ens: &Ensemble,
    b: &ParamMatrix,
    mode: InfoMode,
    opts: &InferenceOptions,
) -> Result<Vec<DMatrix<f64>>, InferenceError> {
    let cap = opts.cap();
    let want = TableRequest {
        unconditional: true,
        conditional: mode == InfoMode::Observed,
        patterns: mode == InfoMode::Fisher,
    };
    let tables = build_tables(ens.networks(), ens.spec(), cap, want)?;
    let thetas: Vec<Vec<f64>> = (0..ens.len())
        .map(|s| ens.theta(b, s).map(|t| t.iter().copied().collect()))
        .collect::<Result<_, _>>()?;
    let p = ens.spec().p();

    (0..ens.len())
        .into_par_iter()
        .map(|s| {
            let net = ens.network(s);
            let theta = &thetas[s];
            let t = &tables[s];
            let prepared = ens.spec().prepare(net)?;
            let uncond_cov = || match &t.unconditional {
                Some(h) => h.moments(theta).cov,
                None => {
                    let rng = seed::stream(opts.seed, net.id(), Purpose::Information, 0);
                    sample_prepared(net, &prepared, theta, false, opts.draws, rng, &opts.sampler).cov()
                }
            };
            let mut m = if net.is_fully_observed() {
                uncond_cov()
            } else {
                match mode {
                    InfoMode::Observed => {
                        let cond = match &t.conditional {
                            Some(h) => h.moments(theta).cov,
                            None => {
                                let rng = seed::stream(opts.seed, net.id(), Purpose::Information, 1);
                                sample_prepared(net, &prepared, theta, true, opts.draws, rng, &opts.sampler).cov()
                            }
                        };
                        uncond_cov() - cond
                    }
                    InfoMode::Fisher => match &t.patterns {
                        Some(pt) => pt.decomposition(theta).var_cond_mean,
                        None => nested_sample(net, &prepared, theta, opts.nested, opts.seed, 0, &opts.sampler, cap)
                            .total_variance(),
                    },
                }
            };
            linalg::symmetrize(&mut m);
            debug_assert_eq!(m.nrows(), p);
            Ok(m)
        })
        .collect()
}

/// `Σ_s Z_sᵀ M_s Z_s` in reduced coordinates.
pub fn ensemble_information(
    ens: &Ensemble,
    b: &ParamMatrix,
    mode: InfoMode,
    opts: &InferenceOptions,
) -> Result<DMatrix<f64>, InferenceError> {
    let blocks = information_blocks(ens, b, mode, opts)?;
    let lifted: Vec<DMatrix<f64>> = blocks.iter().enumerate().map(|(s, m)| lift_matrix(ens.x(s), b, m)).collect();
    let mut info = linalg::pairwise_sum_mat(&lifted, b.k());
    linalg::symmetrize(&mut info);
    Ok(info)
}
