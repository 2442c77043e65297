use nalgebra::DMatrix;
use netensemble::diagnostics::{
    pearson_residual, quantile_p, NestedSimPlan, TargetStatistic, VarianceEstimator,
};
use netensemble::expr::Expr;
use netensemble::graph::AttrColumn;
use netensemble::inference::mcmc::sample_networks;
use netensemble::inference::{
    enumerate_moments, ensemble_information, fit_mle, FitOptions, InferenceError, InferenceOptions, InfoMode,
    PatternTable, SamplerConfig,
};
use netensemble::stats::{change_stats, eval_stats};
use netensemble::{seed, Ensemble, Network, ParamMatrix, StatisticSpec, Term};
use proptest::prelude::*;

const ROLES: [&str; 3] = ["a", "b", "c"];

/// A random network on `n` nodes with a categorical and a real attribute,
/// and a random missing-dyad mask.
fn arb_network(max_n: usize, p_missing: f64) -> impl Strategy<Value = Network> {
    (2..=max_n).prop_flat_map(move |n| {
        let m = n * (n - 1) / 2;
        (
            proptest::collection::vec(any::<bool>(), m),
            proptest::collection::vec(proptest::bool::weighted(p_missing), m),
            proptest::collection::vec(0usize..3, n),
            proptest::collection::vec(0.0f64..80.0, n),
        )
            .prop_map(move |(edges, missing, roles, ages)| {
                let mut net = Network::new("p", n).unwrap();
                for (k, d) in net.dyads().collect::<Vec<_>>().into_iter().enumerate() {
                    net.set_edge(d, edges[k]);
                    net.set_missing(d, missing[k]);
                }
                let r: Vec<&str> = roles.iter().map(|&c| ROLES[c]).collect();
                net.set_attr("role", AttrColumn::categorical(&r)).unwrap();
                net.set_attr("age", AttrColumn::Real(ages)).unwrap();
                net
            })
    })
}

fn mixing(a: &str, b: &str) -> Term {
    Term::Mixing { attr: "role".into(), pair: (a.into(), b.into()), condition: None }
}

fn full_vocabulary() -> StatisticSpec {
    StatisticSpec::from_terms([
        Term::Edges,
        Term::TwoStars,
        Term::Triangles,
        mixing("a", "b"),
        Term::Mixing {
            attr: "role".into(),
            pair: ("c".into(), "c".into()),
            condition: Some(Expr::parse("any(i.role == 'a')").unwrap()),
        },
        Term::IncidentEdges { attr: "age".into(), predicate: Expr::parse("x >= 18 && x < 65").unwrap() },
        Term::CustomIndicator { predicate: Expr::parse("i.role == 'a' && abs(i.age - j.age) < 20").unwrap() },
    ])
    .unwrap()
}

fn ett() -> StatisticSpec {
    StatisticSpec::edges_twostars_triangles()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn change_statistics_are_exact_differences(net in arb_network(8, 0.0), k in 0usize..28) {
        let spec = full_vocabulary();
        let d = net.dyad_at(k % net.num_dyads());
        let before = eval_stats(&net, &spec).unwrap();
        let delta = change_stats(&net, d, &spec).unwrap();
        let mut after_net = net.clone();
        after_net.toggle_dyad(d);
        let after = eval_stats(&after_net, &spec).unwrap();
        prop_assert_eq!(delta, sub(&after, &before));
    }

    #[test]
    fn mixing_cells_partition_edges(net in arb_network(8, 0.0)) {
        let mut terms = vec![Term::Edges];
        for (x, a) in ROLES.iter().enumerate() {
            for b in &ROLES[x..] {
                terms.push(mixing(a, b));
            }
        }
        let g = eval_stats(&net, &StatisticSpec::from_terms(terms).unwrap()).unwrap();
        prop_assert_eq!(g[0], g[1..].iter().sum::<f64>());
    }

    #[test]
    fn conditional_sampler_keeps_observed_dyads(
        net in arb_network(6, 0.5),
        theta in proptest::collection::vec(-1.5f64..1.5, 3),
        s in any::<u64>(),
    ) {
        let spec = ett();
        let prepared = spec.prepare(&net).unwrap();
        let draws = sample_networks(&net, &prepared, &theta, true, 20, seed::rng(s), &SamplerConfig::default());
        for y in &draws {
            prop_assert_eq!(y.fixed_dyad_hash(), net.fixed_dyad_hash());
            for d in net.dyads().filter(|&d| !net.is_missing(d)) {
                prop_assert_eq!(y.has_edge(d), net.has_edge(d));
            }
        }
    }

    #[test]
    fn total_variance_identity(net in arb_network(4, 0.4), theta in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let spec = ett();
        let table = PatternTable::build(&net, &spec.prepare(&net).unwrap(), 20).unwrap();
        let dec = table.decomposition(&theta);
        let sigma = enumerate_moments(&net, &spec, &theta, false, 20).unwrap().cov;
        let gap = (&sigma - &dec.expected_cond_cov - &dec.var_cond_mean).abs().max();
        prop_assert!(gap <= 1e-10, "identity gap {gap:e}");
    }

    #[test]
    fn fisher_information_is_symmetric_psd(
        nets in proptest::collection::vec(arb_network(5, 0.3), 1..4),
        theta in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let nets: Vec<Network> = nets
            .into_iter()
            .enumerate()
            .map(|(k, mut n)| { n.set_id(format!("n{k}")); n })
            .collect();
        let ens = Ensemble::simple(nets, ett()).unwrap();
        let info = ensemble_information(&ens, &ParamMatrix::from_theta(&theta), InfoMode::Fisher, &InferenceOptions::default())
            .unwrap();
        prop_assert!((&info - info.transpose()).abs().max() <= 1e-12);
        let ev = info.clone().symmetric_eigen().eigenvalues;
        let top = ev.max().max(0.0);
        prop_assert!(ev.min() >= -1e-10 * top.max(1e-300), "eigenvalues {ev:?}");
    }

    #[test]
    fn quantile_p_ignores_monotone_transforms(
        t in 0i64..30,
        sims in proptest::collection::vec(0i64..30, 2..200),
        f in 0usize..3,
    ) {
        let map = |v: i64| -> f64 {
            let v = v as f64;
            match f {
                0 => 3.0 * v - 7.0,
                1 => (v / 5.0).exp(),
                _ => v.powi(3) + v,
            }
        };
        let raw: Vec<f64> = sims.iter().map(|&v| v as f64).collect();
        let mapped: Vec<f64> = sims.iter().map(|&v| map(v)).collect();
        prop_assert_eq!(quantile_p(t as f64, &raw), quantile_p(map(t), &mapped));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// At the exact optimum the aggregate conditional expectation matches
    /// the aggregate model expectation, checked against direct enumeration.
    #[test]
    fn exact_fit_matches_moments(nets in proptest::collection::vec(arb_network(4, 0.3), 4..10)) {
        let nets: Vec<Network> = nets
            .into_iter()
            .enumerate()
            .map(|(k, mut n)| { n.set_id(format!("m{k}")); n })
            .collect();
        let spec = StatisticSpec::from_terms([Term::Edges, Term::Triangles]).unwrap();
        let ens = Ensemble::simple(nets, spec.clone()).unwrap();
        let fit = match fit_mle(&ens, &ParamMatrix::zeros(1, 2), &FitOptions::default()) {
            Ok(f) => f,
            Err(InferenceError::InfiniteMle { .. }) | Err(InferenceError::Nonidentifiable(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let theta: Vec<f64> = fit.estimate.iter().copied().collect();
        let mut score = [0.0; 2];
        for net in ens.networks() {
            let cond = enumerate_moments(net, &spec, &theta, true, 20).unwrap().mean;
            let uncond = enumerate_moments(net, &spec, &theta, false, 20).unwrap().mean;
            for l in 0..2 {
                score[l] += cond[l] - uncond[l];
            }
        }
        prop_assert!(score.iter().all(|s| s.abs() <= 1e-6), "score {score:?}");
    }
}

#[test]
fn zero_covariate_column_leaves_other_estimates() {
    let nets: Vec<Network> = (0..12)
        .map(|k| {
            let n = 3 + k % 3;
            let mut y = Network::new(format!("z{k}"), n).unwrap();
            for (c, d) in y.dyads().collect::<Vec<_>>().into_iter().enumerate() {
                y.set_edge(d, (c * 7 + k) % 3 == 0);
            }
            if k % 2 == 0 {
                y.set_egocentric(0).unwrap();
            }
            y
        })
        .collect();
    let spec = StatisticSpec::from_terms([Term::Edges, Term::TwoStars]).unwrap();
    let base = Ensemble::simple(nets.clone(), spec.clone()).unwrap();
    let fit0 = fit_mle(&base, &ParamMatrix::zeros(1, 2), &FitOptions::default()).unwrap();

    let rows: Vec<Vec<f64>> = (0..nets.len()).map(|_| vec![1.0, 0.0]).collect();
    let cov = netensemble::NetworkCovariates::new(vec!["1".into(), "zero".into()], rows).unwrap();
    let wide = Ensemble::new(nets, cov, spec, vec![Vec::new(); 12]).unwrap();
    let mask = DMatrix::from_row_slice(2, 2, &[true, true, false, false]);
    let template = ParamMatrix::new(DMatrix::zeros(2, 2), mask, None).unwrap();
    let fit1 = fit_mle(&wide, &template, &FitOptions::default()).unwrap();
    assert_eq!(fit1.estimate.len(), 2);
    assert!((&fit1.estimate - &fit0.estimate).abs().max() <= 1e-9);
}

#[test]
fn residuals_are_reproducible_across_thread_pools() {
    let nets: Vec<Network> = (0..16)
        .map(|k| {
            let mut y = Network::complete(format!("r{k}"), 5).unwrap();
            for d in y.dyads().collect::<Vec<_>>() {
                if (d.i + d.j + k) % 2 == 0 {
                    y.set_edge(d, false);
                }
            }
            y.set_egocentric(k % 5).unwrap();
            y
        })
        .collect();
    let ens = Ensemble::simple(nets, ett()).unwrap();
    let b = ParamMatrix::from_theta(&[-0.4, 0.05, 0.1]);
    let plan = NestedSimPlan { r1: 60, r2: 6, estimator: VarianceEstimator::TotalVariance, seed: 5 };
    let opts = InferenceOptions { force_mcmc: true, ..InferenceOptions::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pearson_residual(&ens, &b, &TargetStatistic::edges(), &plan, &opts).unwrap())
    };
    let one = run(1);
    let many = run(6);
    assert_eq!(one.len(), 16);
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.residual.to_bits(), b.residual.to_bits());
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }
}
