//! Maximum-likelihood estimation of the free entries of `vec(B)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::enumerate::{build_tables, StateHistogram, TableRequest};
use super::information::{ensemble_information, InfoMode};
use super::loglik::{information_criteria, loglik_with_intervals, DEFAULT_PATH_INTERVALS};
use super::mcmc::{sample_prepared, StatDraws};
use super::{InferenceError, InferenceOptions};
use crate::graph::Network;
use crate::linalg;
use crate::model::{lift_matrix, lift_vector, reduced_design, Ensemble, ParamMatrix};
use crate::seed::{self, Purpose};
use crate::stats::{widen, PreparedSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub inference: InferenceOptions,
    pub max_iter: usize,
    /// Score tolerance (sup norm) on the exact path.
    pub tol: f64,
    /// Draw multiplier for the final Monte Carlo iterations.
    pub final_draws_factor: usize,
    pub polish_iters: usize,
    pub path_intervals: usize,
    pub check_boundary: bool,
    pub info_mode: InfoMode,
    /// Starting point in reduced coordinates; MPLE when absent.
    pub init: Option<DVector<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            inference: InferenceOptions::default(),
            max_iter: 100,
            tol: 1e-6,
            final_draws_factor: 4,
            polish_iters: 3,
            path_intervals: DEFAULT_PATH_INTERVALS,
            check_boundary: true,
            info_mode: InfoMode::Fisher,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Exact,
    MonteCarlo,
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::Exact => "exact",
            FitMethod::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamMatrix,
    pub coef_names: Vec<String>,
    pub estimate: DVector<f64>,
    pub se: DVector<f64>,
    pub information: DMatrix<f64>,
    /// Monte Carlo error of the estimate itself (zero on the exact path).
    pub estimate_mcse: DVector<f64>,
    pub loglik: f64,
    pub loglik_mcse: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub method: FitMethod,
    pub seed: u64,
}

/// A coordinate whose observed aggregate is extreme over every imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryHit {
    pub coordinate: usize,
    pub name: String,
    /// `"upper"` (estimate diverges to +∞) or `"lower"`.
    pub direction: &'static str,
}

fn fill(net: &Network, present: bool) -> Network {
    let mut y = net.clone();
    for d in net.free_dyads() {
        y.set_edge(d, present);
    }
    y
}

/// Coordinates whose observable aggregate range touches the range over all
/// complete networks. Every supported term is nondecreasing in the edge
/// set, so both ranges are attained by the empty and complete fills.
pub fn boundary_check(ens: &Ensemble, b: &ParamMatrix) -> Result<Vec<BoundaryHit>, InferenceError> {
    let coords = b.free_coords();
    let names = b.coord_names(ens.covariates().names(), &ens.spec().names());
    let mut obs_lo = vec![0.0; coords.len()];
    let mut obs_hi = vec![0.0; coords.len()];
    let mut all_lo = vec![0.0; coords.len()];
    let mut all_hi = vec![0.0; coords.len()];
    for (s, net) in ens.networks().iter().enumerate() {
        let prep = ens.spec().prepare(net)?;
        let g0 = widen(&prep.eval(&fill(net, false)));
        let g1 = widen(&prep.eval(&fill(net, true)));
        let mut empty = net.clone();
        let mut full = net.clone();
        for d in net.dyads() {
            empty.set_edge(d, false);
            full.set_edge(d, true);
        }
        let e0 = widen(&prep.eval(&empty));
        let e1 = widen(&prep.eval(&full));
        let x = ens.x(s);
        for (c, &(k, l)) in coords.iter().enumerate() {
            let (a, bb, ea, eb) = (x[k] * g0[l], x[k] * g1[l], x[k] * e0[l], x[k] * e1[l]);
            obs_lo[c] += a.min(bb);
            obs_hi[c] += a.max(bb);
            all_lo[c] += ea.min(eb);
            all_hi[c] += ea.max(eb);
        }
    }
    let mut hits = Vec::new();
    for c in 0..coords.len() {
        let scale = all_hi[c].abs().max(all_lo[c].abs()).max(1.0) * 1e-12;
        if all_hi[c] - all_lo[c] <= scale {
            continue;
        }
        if obs_lo[c] >= all_hi[c] - scale {
            hits.push(BoundaryHit { coordinate: c, name: names[c].clone(), direction: "upper" });
        } else if obs_hi[c] <= all_lo[c] + scale {
            hits.push(BoundaryHit { coordinate: c, name: names[c].clone(), direction: "lower" });
        }
    }
    Ok(hits)
}

/// Logistic maximum pseudo-likelihood over the observed dyads, using only
/// coordinates of dyad-independent terms; the rest start at zero.
pub fn mple(ens: &Ensemble, b: &ParamMatrix) -> Result<DVector<f64>, InferenceError> {
    let coords = b.free_coords();
    let terms = ens.spec().terms();
    let active: Vec<usize> =
        (0..coords.len()).filter(|&c| terms[coords[c].1].term.is_dyad_independent()).collect();
    let mut out = DVector::zeros(coords.len());
    if active.is_empty() {
        return Ok(out);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offsets = Vec::new();
    let mut ys = Vec::new();
    for (s, net) in ens.networks().iter().enumerate() {
        let prep = ens.spec().prepare(net)?;
        let x = ens.x(s);
        let theta_off: Vec<f64> = match b.offset() {
            Some(o) => (0..b.p()).map(|l| (0..b.q()).map(|k| o[(k, l)] * x[k]).sum()).collect(),
            None => vec![0.0; b.p()],
        };
        let mut empty = net.clone();
        for d in net.dyads() {
            empty.set_edge(d, false);
        }
        for d in net.dyads().filter(|&d| !net.is_missing(d)) {
            let delta = widen(&prep.change(&empty, d));
            rows.push(active.iter().map(|&c| x[coords[c].0] * delta[coords[c].1]).collect());
            offsets.push(
                (0..b.p()).filter(|&l| terms[l].term.is_dyad_independent()).map(|l| theta_off[l] * delta[l]).sum(),
            );
            ys.push(if net.has_edge(d) { 1.0 } else { 0.0 });
        }
    }
    let beta = logistic_irls(&rows, &offsets, &ys, active.len());
    for (i, &c) in active.iter().enumerate() {
        out[c] = beta[i];
    }
    Ok(out)
}

fn logistic_irls(rows: &[Vec<f64>], offsets: &[f64], ys: &[f64], k: usize) -> DVector<f64> {
    const CLAMP: f64 = 10.0;
    let mut beta = DVector::zeros(k);
    let deviance = |beta: &DVector<f64>| -> f64 {
        rows.iter()
            .zip(offsets)
            .zip(ys)
            .map(|((r, o), y)| {
                let eta: f64 = o + r.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();
                // log(1 + e^eta) - y * eta, stably
                let sp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
                sp - y * eta
            })
            .sum()
    };
    let mut dev = deviance(&beta);
    for _ in 0..50 {
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::identity(k, k) * 1e-9;
        for ((r, o), y) in rows.iter().zip(offsets).zip(ys) {
            let eta: f64 = o + r.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            for a in 0..k {
                grad[a] += (y - mu) * r[a];
                for c in 0..k {
                    hess[(a, c)] += w * r[a] * r[c];
                }
            }
        }
        if grad.amax() < 1e-10 {
            break;
        }
        let Some(step) = linalg::spd_solve(&hess, &grad) else { break };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let cand = (&beta + &step * t).map(|v| v.clamp(-CLAMP, CLAMP));
            let d = deviance(&cand);
            if d <= dev {
                beta = cand;
                improved = dev - d > 1e-14 * dev.abs().max(1.0);
                dev = d;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    beta
}

/// Per-network value, score, observed and complete-data information.
struct ExactEval {
    loglik: f64,
    grad: DVector<f64>,
    obs_info: DMatrix<f64>,
    full_info: DMatrix<f64>,
}

enum CondPart {
    Fixed(Vec<f64>),
    Table(Arc<StateHistogram>),
    Sampled,
}

enum UncondPart {
    Table(Arc<StateHistogram>),
    Sampled,
}

struct Component {
    prepared: PreparedSpec,
    uncond: UncondPart,
    cond: CondPart,
}

fn components(ens: &Ensemble, cap: usize) -> Result<Vec<Component>, InferenceError> {
    let want = TableRequest { unconditional: true, conditional: true, patterns: false };
    let tables = build_tables(ens.networks(), ens.spec(), cap, want)?;
    ens.networks()
        .iter()
        .zip(tables)
        .map(|(net, t)| {
            let prepared = ens.spec().prepare(net)?;
            let cond = if net.is_fully_observed() {
                CondPart::Fixed(widen(&prepared.eval(net)))
            } else {
                t.conditional.map_or(CondPart::Sampled, CondPart::Table)
            };
            let uncond = t.unconditional.map_or(UncondPart::Sampled, UncondPart::Table);
            Ok(Component { prepared, uncond, cond })
        })
        .collect()
}

fn thetas(ens: &Ensemble, b: &ParamMatrix) -> Result<Vec<Vec<f64>>, InferenceError> {
    (0..ens.len()).map(|s| Ok(ens.theta(b, s)?.iter().copied().collect())).collect()
}

fn exact_eval(ens: &Ensemble, comps: &[Component], b: &ParamMatrix) -> Result<ExactEval, InferenceError> {
    let th = thetas(ens, b)?;
    let p = ens.spec().p();
    let parts: Vec<(f64, DVector<f64>, DMatrix<f64>, DMatrix<f64>)> = comps
        .par_iter()
        .enumerate()
        .map(|(s, comp)| {
            let x = ens.x(s);
            let theta = &th[s];
            let UncondPart::Table(u) = &comp.uncond else { unreachable!("exact path needs tables") };
            let mu = u.moments(theta);
            let (lc, mc, cc) = match &comp.cond {
                CondPart::Fixed(g) => {
                    let eta: f64 = g.iter().zip(theta).map(|(a, b)| a * b).sum();
                    (eta, DVector::from_column_slice(g), DMatrix::zeros(p, p))
                }
                CondPart::Table(h) => {
                    let m = h.moments(theta);
                    (m.log_z, m.mean, m.cov)
                }
                CondPart::Sampled => unreachable!("exact path needs tables"),
            };
            let grad = lift_vector(x, b, (mc - &mu.mean).as_slice());
            let obs = lift_matrix(x, b, &(&mu.cov - cc));
            let full = lift_matrix(x, b, &mu.cov);
            (lc - mu.log_z, grad, obs, full)
        })
        .collect();
    let k = b.k();
    let ll: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let g: Vec<DVector<f64>> = parts.iter().map(|p| p.1.clone()).collect();
    let o: Vec<DMatrix<f64>> = parts.iter().map(|p| p.2.clone()).collect();
    let f: Vec<DMatrix<f64>> = parts.iter().map(|p| p.3.clone()).collect();
    Ok(ExactEval {
        loglik: linalg::pairwise_sum(&ll),
        grad: linalg::pairwise_sum_vec(&g, k),
        obs_info: linalg::pairwise_sum_mat(&o, k),
        full_info: linalg::pairwise_sum_mat(&f, k),
    })
}

/// Newton direction from a preferred curvature, falling back to a
/// guaranteed-positive-definite one.
fn newton_direction(preferred: &DMatrix<f64>, fallback: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if linalg::is_numerically_pd(preferred, 1e-10) {
        if let Some(d) = linalg::spd_solve(preferred, grad) {
            return Some(d);
        }
    }
    let k = fallback.nrows();
    let ridge = fallback.diagonal().amax().max(1e-12) * 1e-10;
    linalg::spd_solve(&(fallback + DMatrix::identity(k, k) * ridge), grad)
}

fn exact_newton(
    ens: &Ensemble,
    comps: &[Component],
    template: &ParamMatrix,
    start: DVector<f64>,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize, f64), InferenceError> {
    let mut v = start;
    let mut cur = exact_eval(ens, comps, &template.with_free(&v)?)?;
    for it in 0..opts.max_iter {
        let norm = cur.grad.amax();
        if norm <= opts.tol {
            return Ok((v, it, norm));
        }
        let Some(mut dir) = newton_direction(&cur.obs_info, &cur.full_info, &cur.grad) else {
            return Err(InferenceError::Nonidentifiable("complete-data information is singular".into()));
        };
        let big = dir.amax();
        if big > 5.0 {
            dir *= 5.0 / big;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t >= 1e-10 {
            let cand = &v + &dir * t;
            let ev = exact_eval(ens, comps, &template.with_free(&cand)?)?;
            if ev.loglik >= cur.loglik - 1e-12 * cur.loglik.abs().max(1.0) {
                accepted = Some((cand, ev));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, ev)) => {
                v = cand;
                cur = ev;
            }
            None => {
                return Err(InferenceError::NonConvergence {
                    iterations: it,
                    score_norm: norm,
                    last: v.iter().copied().collect(),
                })
            }
        }
    }
    let norm = cur.grad.amax();
    if norm <= opts.tol {
        return Ok((v, opts.max_iter, norm));
    }
    Err(InferenceError::NonConvergence { iterations: opts.max_iter, score_norm: norm, last: v.iter().copied().collect() })
}

/// Draws for one network's sampled parts at the current parameters.
struct NetDraws {
    uncond: Option<StatDraws>,
    cond: Option<StatDraws>,
}

/// Log-mean-exp of `Δθ·g_r`, with weighted mean and covariance.
fn is_part(draws: &StatDraws, dtheta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>, f64) {
    let r = draws.len();
    let p = draws.p();
    let eta: Vec<f64> = (0..r).map(|i| draws.row(i).iter().zip(dtheta).map(|(a, b)| a * b).sum()).collect();
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let mut mean = DVector::zeros(p);
    for (i, wi) in w.iter().enumerate() {
        for c in 0..p {
            mean[c] += wi * draws.row(i)[c];
        }
    }
    mean /= sw;
    let mut cov = DMatrix::zeros(p, p);
    for (i, wi) in w.iter().enumerate() {
        let d = DVector::from_column_slice(draws.row(i)) - &mean;
        cov += &d * d.transpose() * *wi;
    }
    cov /= sw;
    let value = max + (sw / r as f64).ln();
    (value, mean, cov, sw * sw / sw2 / r as f64)
}

struct IsEval {
    value: f64,
    grad: DVector<f64>,
    curv: DMatrix<f64>,
    full: DMatrix<f64>,
    min_ess: f64,
}

/// Importance-sampled estimate of `ℓ(B + δ) − ℓ(B)` with derivatives.
fn is_eval(
    ens: &Ensemble,
    comps: &[Component],
    b: &ParamMatrix,
    th: &[Vec<f64>],
    draws: &[NetDraws],
    delta: &DVector<f64>,
) -> IsEval {
    let p = ens.spec().p();
    let parts: Vec<(f64, DVector<f64>, DMatrix<f64>, DMatrix<f64>, f64)> = comps
        .par_iter()
        .enumerate()
        .map(|(s, comp)| {
            let x = ens.x(s);
            let dth: Vec<f64> = (reduced_design(x, b) * delta).iter().copied().collect();
            let new_theta: Vec<f64> = th[s].iter().zip(&dth).map(|(a, b)| a + b).collect();
            let mut ess = 1.0f64;
            let (lu, mu, cu) = match &comp.uncond {
                UncondPart::Table(h) => {
                    let m = h.moments(&new_theta);
                    (m.log_z - h.log_partition(&th[s]), m.mean, m.cov)
                }
                UncondPart::Sampled => {
                    let (v, m, c, e) = is_part(draws[s].uncond.as_ref().unwrap(), &dth);
                    ess = ess.min(e);
                    (v, m, c)
                }
            };
            let (lc, mc, cc) = match &comp.cond {
                CondPart::Fixed(g) => {
                    (g.iter().zip(&dth).map(|(a, b)| a * b).sum(), DVector::from_column_slice(g), DMatrix::zeros(p, p))
                }
                CondPart::Table(h) => {
                    let m = h.moments(&new_theta);
                    (m.log_z - h.log_partition(&th[s]), m.mean, m.cov)
                }
                CondPart::Sampled => {
                    let (v, m, c, e) = is_part(draws[s].cond.as_ref().unwrap(), &dth);
                    ess = ess.min(e);
                    (v, m, c)
                }
            };
            let grad = lift_vector(x, b, (mc - &mu).as_slice());
            let curv = lift_matrix(x, b, &(&cu - cc));
            let full = lift_matrix(x, b, &cu);
            (lc - lu, grad, curv, full, ess)
        })
        .collect();
    let k = b.k();
    let vals: Vec<f64> = parts.iter().map(|p| p.0).collect();
    IsEval {
        value: linalg::pairwise_sum(&vals),
        grad: linalg::pairwise_sum_vec(&parts.iter().map(|p| p.1.clone()).collect::<Vec<_>>(), k),
        curv: linalg::pairwise_sum_mat(&parts.iter().map(|p| p.2.clone()).collect::<Vec<_>>(), k),
        full: linalg::pairwise_sum_mat(&parts.iter().map(|p| p.3.clone()).collect::<Vec<_>>(), k),
        min_ess: parts.iter().map(|p| p.4).fold(1.0, f64::min),
    }
}

fn sample_all(
    ens: &Ensemble,
    comps: &[Component],
    th: &[Vec<f64>],
    draws: usize,
    opts: &InferenceOptions,
    iteration: u64,
) -> Vec<NetDraws> {
    comps
        .par_iter()
        .enumerate()
        .map(|(s, comp)| {
            let net = ens.network(s);
            let uncond = matches!(comp.uncond, UncondPart::Sampled).then(|| {
                let rng = seed::stream(opts.seed, net.id(), Purpose::FitUnconditional, iteration);
                sample_prepared(net, &comp.prepared, &th[s], false, draws, rng, &opts.sampler)
            });
            let cond = matches!(comp.cond, CondPart::Sampled).then(|| {
                let rng = seed::stream(opts.seed, net.id(), Purpose::FitConditional, iteration);
                sample_prepared(net, &comp.prepared, &th[s], true, draws, rng, &opts.sampler)
            });
            NetDraws { uncond, cond }
        })
        .collect()
}

/// Monte Carlo covariance of the score estimate at `δ = 0`.
fn score_cov(ens: &Ensemble, b: &ParamMatrix, draws: &[NetDraws]) -> DMatrix<f64> {
    let parts: Vec<DMatrix<f64>> = draws
        .iter()
        .enumerate()
        .map(|(s, d)| {
            let p = ens.spec().p();
            let mut m = DMatrix::zeros(p, p);
            for part in [&d.uncond, &d.cond].into_iter().flatten() {
                m += part.long_run_cov() / part.len() as f64;
            }
            lift_matrix(ens.x(s), b, &m)
        })
        .collect();
    linalg::pairwise_sum_mat(&parts, b.k())
}

/// Maximizes the importance-sampled log-likelihood ratio around the
/// current sample, inside a unit trust region.
fn is_newton_step(
    ens: &Ensemble,
    comps: &[Component],
    b: &ParamMatrix,
    th: &[Vec<f64>],
    draws: &[NetDraws],
) -> DVector<f64> {
    const RADIUS: f64 = 1.0;
    const MIN_ESS: f64 = 0.05;
    let k = b.k();
    let mut delta = DVector::zeros(k);
    let mut cur = is_eval(ens, comps, b, th, draws, &delta);
    for _ in 0..30 {
        let Some(step) = newton_direction(&cur.curv, &cur.full, &cur.grad) else { break };
        let mut cand_dir = step;
        let target = &delta + &cand_dir;
        if target.norm() > RADIUS {
            // Shrink so the proposal stays on the trust-region ball.
            let scale = (RADIUS - delta.norm()).max(0.0) / cand_dir.norm().max(1e-300);
            cand_dir *= scale.min(1.0);
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let cand = &delta + &cand_dir * t;
            let ev = is_eval(ens, comps, b, th, draws, &cand);
            if ev.value.is_finite() && ev.value >= cur.value && ev.min_ess >= MIN_ESS {
                moved = (&cand - &delta).amax() > 1e-12;
                delta = cand;
                cur = ev;
                break;
            }
            t *= 0.5;
        }
        if !moved || cur.grad.amax() < 1e-9 {
            break;
        }
    }
    delta
}

fn mc_newton(
    ens: &Ensemble,
    comps: &[Component],
    template: &ParamMatrix,
    start: DVector<f64>,
    opts: &FitOptions,
) -> Result<(DVector<f64>, usize, f64, bool, DVector<f64>), InferenceError> {
    let inf = &opts.inference;
    let mut v = start;
    let mut it = 0u64;
    let mut phase1_done = false;
    for _ in 0..opts.max_iter {
        let b = template.with_free(&v)?;
        let th = thetas(ens, &b)?;
        let draws = sample_all(ens, comps, &th, inf.draws, inf, it);
        it += 1;
        let at0 = is_eval(ens, comps, &b, &th, &draws, &DVector::zeros(b.k()));
        let sd = score_cov(ens, &b, &draws).diagonal().map(|x| x.sqrt());
        if at0.grad.iter().zip(sd.iter()).all(|(g, s)| g.abs() <= 2.0 * s + opts.tol) {
            phase1_done = true;
            break;
        }
        v += is_newton_step(ens, comps, &b, &th, &draws);
    }
    if !phase1_done {
        let b = template.with_free(&v)?;
        let th = thetas(ens, &b)?;
        let draws = sample_all(ens, comps, &th, inf.draws, inf, it);
        let g = is_eval(ens, comps, &b, &th, &draws, &DVector::zeros(b.k())).grad;
        return Err(InferenceError::NonConvergence {
            iterations: it as usize,
            score_norm: g.amax(),
            last: v.iter().copied().collect(),
        });
    }
    let big = inf.draws * opts.final_draws_factor.max(1);
    for _ in 0..opts.polish_iters {
        let b = template.with_free(&v)?;
        let th = thetas(ens, &b)?;
        let draws = sample_all(ens, comps, &th, big, inf, it);
        it += 1;
        v += is_newton_step(ens, comps, &b, &th, &draws);
    }
    // Final check at the reported estimate.
    let b = template.with_free(&v)?;
    let th = thetas(ens, &b)?;
    let draws = sample_all(ens, comps, &th, big, inf, it);
    let at0 = is_eval(ens, comps, &b, &th, &draws, &DVector::zeros(b.k()));
    let vcov = score_cov(ens, &b, &draws);
    let sd = vcov.diagonal().map(|x| x.sqrt());
    let converged = at0.grad.iter().zip(sd.iter()).all(|(g, s)| g.abs() <= 4.0 * s + opts.tol);
    let curv = if linalg::is_numerically_pd(&at0.curv, 1e-10) { at0.curv.clone() } else { at0.full.clone() };
    let est_mcse = match linalg::spd_inverse(&curv) {
        Some(inv) => (&inv * &vcov * &inv).diagonal().map(|x| x.max(0.0).sqrt()),
        None => DVector::from_element(b.k(), f64::NAN),
    };
    Ok((v, it as usize + 1, at0.grad.amax(), converged, est_mcse))
}

/// Fits the free entries of `template` (mask and offsets are kept).
pub fn fit_mle(ens: &Ensemble, template: &ParamMatrix, opts: &FitOptions) -> Result<FitResult, InferenceError> {
    if template.p() != ens.spec().p() || template.q() != ens.covariates().q() {
        return Err(crate::model::ModelError::Dimension(format!(
            "coefficient matrix is {}x{}, model needs {}x{}",
            template.q(),
            template.p(),
            ens.covariates().q(),
            ens.spec().p()
        ))
        .into());
    }
    if opts.check_boundary {
        if let Some(h) = boundary_check(ens, template)?.into_iter().next() {
            return Err(InferenceError::InfiniteMle { coordinate: h.name, direction: h.direction });
        }
    }
    let inf = &opts.inference;
    let comps = components(ens, inf.cap())?;
    let start = match &opts.init {
        Some(v) if v.len() == template.k() => v.clone(),
        Some(v) => {
            return Err(InferenceError::Config(format!(
                "initial vector has {} entries, model has {} free coordinates",
                v.len(),
                template.k()
            )))
        }
        None => mple(ens, template)?,
    };
    let all_exact = comps
        .iter()
        .all(|c| matches!(c.uncond, UncondPart::Table(_)) && !matches!(c.cond, CondPart::Sampled));
    let (v, iterations, score_norm, converged, estimate_mcse, method) = if all_exact {
        let (v, it, norm) = exact_newton(ens, &comps, template, start, opts)?;
        (v, it, norm, true, DVector::zeros(template.k()), FitMethod::Exact)
    } else {
        let (v, it, norm, conv, mcse) = mc_newton(ens, &comps, template, start, opts)?;
        (v, it, norm, conv, mcse, FitMethod::MonteCarlo)
    };
    let params = template.with_free(&v)?;
    let information = ensemble_information(ens, &params, opts.info_mode, inf)?;
    let names = params.coord_names(ens.covariates().names(), &ens.spec().names());
    if !linalg::is_numerically_pd(&information, 1e-10) {
        let (vals, vecs) = linalg::sym_eigen(&information);
        let null = vecs.column(0);
        let involved: Vec<String> = null
            .iter()
            .zip(&names)
            .filter(|(w, _)| w.abs() > 1e-6)
            .map(|(w, n)| format!("{w:+.3}·{n}"))
            .collect();
        let smallest = if vals.is_empty() { 0.0 } else { vals[0] };
        return Err(InferenceError::Nonidentifiable(format!(
            "smallest eigenvalue {smallest:.3e}, null direction {}",
            involved.join(" ")
        )));
    }
    let inv = linalg::spd_inverse(&information)
        .ok_or_else(|| InferenceError::Nonidentifiable("information not invertible".into()))?;
    let se = inv.diagonal().map(|x| x.sqrt());
    let ll = loglik_with_intervals(ens, &params, inf, opts.path_intervals)?;
    let (aic, bic) = information_criteria(ll.value, template.k(), ens.observed_dyads());
    Ok(FitResult {
        params,
        coef_names: names,
        estimate: v,
        se,
        information,
        estimate_mcse,
        loglik: ll.value,
        loglik_mcse: ll.mcse,
        aic,
        bic,
        iterations,
        converged,
        score_norm,
        method,
        seed: inf.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkCovariates;
    use crate::stats::{StatisticSpec, Term};

    fn edges() -> StatisticSpec {
        StatisticSpec::from_terms([Term::Edges]).unwrap()
    }

    #[test]
    fn bernoulli_is_pooled_logit() {
        let nets = vec![
            Network::from_edges("a", 4, &[(0, 1), (1, 2)]).unwrap(),
            Network::from_edges("b", 5, &[(0, 1), (2, 3), (3, 4), (0, 4)]).unwrap(),
        ];
        let ens = Ensemble::simple(nets, edges()).unwrap();
        let fit = fit_mle(&ens, &ParamMatrix::zeros(1, 1), &FitOptions::default()).unwrap();
        let dens: f64 = 6.0 / 16.0;
        assert!((fit.estimate[0] - (dens / (1.0 - dens)).ln()).abs() < 1e-9);
        assert_eq!(fit.method, FitMethod::Exact);
    }

    #[test]
    fn moment_matching_at_zero() {
        // Edge count 3 of 6: the uniform model's expectation
        let nets = vec![Network::from_edges("a", 4, &[(0, 1), (1, 2), (2, 3)]).unwrap()];
        let ens = Ensemble::simple(nets, edges()).unwrap();
        let fit = fit_mle(&ens, &ParamMatrix::zeros(1, 1), &FitOptions::default()).unwrap();
        assert!(fit.estimate[0].abs() < 1e-12);
    }

    #[test]
    fn complete_triangle_is_on_the_boundary() {
        let nets = vec![Network::complete("k", 3).unwrap()];
        let ens = Ensemble::simple(nets, StatisticSpec::edges_twostars_triangles()).unwrap();
        let err = fit_mle(&ens, &ParamMatrix::zeros(1, 3), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, InferenceError::InfiniteMle { direction: "upper", .. }), "{err}");
    }

    #[test]
    fn masked_zero_covariate_leaves_estimates() {
        let nets: Vec<Network> = (0..6)
            .map(|s| {
                let e: &[(usize, usize)] = if s % 2 == 0 { &[(0, 1), (1, 2)] } else { &[(0, 1), (2, 3), (1, 3)] };
                Network::from_edges(format!("n{s}"), 4, e).unwrap()
            })
            .collect();
        let spec = StatisticSpec::from_terms([Term::Edges, Term::TwoStars]).unwrap();
        let base = Ensemble::simple(nets.clone(), spec.clone()).unwrap();
        let f0 = fit_mle(&base, &ParamMatrix::zeros(1, 2), &FitOptions::default()).unwrap();
        let cov = NetworkCovariates::new(vec!["1".into(), "z".into()], vec![vec![1.0, 0.0]; 6]).unwrap();
        let wide = Ensemble::new(nets, cov, spec, vec![vec![]; 6]).unwrap();
        let mut t = ParamMatrix::zeros(2, 2);
        t.fix_at_zero(1, 0);
        t.fix_at_zero(1, 1);
        let f1 = fit_mle(&wide, &t, &FitOptions::default()).unwrap();
        assert!((&f0.estimate - &f1.estimate).amax() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let nets: Vec<Network> = (0..10)
            .map(|s| {
                let e: Vec<(usize, usize)> = match s % 3 {
                    0 => vec![(0, 1), (1, 2)],
                    1 => vec![(0, 1), (2, 3), (1, 3), (0, 3)],
                    _ => vec![(0, 1)],
                };
                Network::from_edges(format!("n{s}"), 4, &e).unwrap()
            })
            .collect();
        let spec = StatisticSpec::from_terms([Term::Edges, Term::TwoStars]).unwrap();
        let ens = Ensemble::simple(nets, spec).unwrap();
        let exact = fit_mle(&ens, &ParamMatrix::zeros(1, 2), &FitOptions::default()).unwrap();
        let mut opts = FitOptions::default();
        opts.inference.force_mcmc = true;
        opts.inference.draws = 1500;
        let mc = fit_mle(&ens, &ParamMatrix::zeros(1, 2), &opts).unwrap();
        assert_eq!(mc.method, FitMethod::MonteCarlo);
        for c in 0..2 {
            let tol = (4.0 * mc.estimate_mcse[c]).max(1e-2);
            assert!((mc.estimate[c] - exact.estimate[c]).abs() <= tol, "{c}: {} vs {}", mc.estimate[c], exact.estimate[c]);
        }
    }
}
