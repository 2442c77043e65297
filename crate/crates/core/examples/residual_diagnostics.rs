//! Pearson residual diagnostics for a model that leaves out a size effect.
//!
//! Networks of sizes 3 to 6 are simulated with an edge coefficient that
//! falls with log size. A model with a constant edge coefficient is
//! fitted, and the residuals of the edge count reveal the missing effect
//! through the size ANOVA and a regression on log n. Refitting with the
//! size effect removes the signal.

use nalgebra::DMatrix;
use netensemble::diagnostics::{
    heterogeneity_sd, pearson_residual, residual_regression, size_anova, NestedSimPlan, TargetStatistic,
};
use netensemble::inference::mcmc::sample_networks;
use netensemble::inference::{fit_mle, FitOptions, InferenceOptions, SamplerConfig};
use netensemble::seed::{self, Purpose};
use netensemble::{Ensemble, Network, NetworkCovariates, ParamMatrix, StatisticSpec, Term};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = StatisticSpec::from_terms([Term::Edges, Term::Triangles])?;
    let mut nets = Vec::new();
    let mut rows = Vec::new();
    for s in 0..240 {
        let n = 3 + s % 4;
        let theta = [1.0 - 1.2 * (n as f64).ln(), 0.2];
        let id = format!("n{s}");
        let empty = Network::new(id.clone(), n)?;
        let prepared = spec.prepare(&empty)?;
        let rng = seed::stream(5, &id, Purpose::Simulate, 0);
        let mut y = sample_networks(&empty, &prepared, &theta, false, 1, rng, &SamplerConfig::default()).remove(0);
        if s % 5 == 0 {
            for d in y.dyads().collect::<Vec<_>>() {
                if d.i != 0 {
                    y.set_edge(d, false);
                }
            }
            y.set_egocentric(0)?;
        }
        nets.push(y);
        rows.push(vec![1.0, (n as f64).ln()]);
    }
    let sizes: Vec<usize> = nets.iter().map(|y| y.n()).collect();
    let groups: Vec<String> = nets.iter().map(|y| if y.is_fully_observed() { "full" } else { "ego" }.to_string()).collect();
    let cov = NetworkCovariates::new(vec!["1".into(), "log_n".into()], rows.clone())?;
    let tags = groups.iter().map(|g| vec![g.clone()]).collect();
    let ens = Ensemble::new(nets, cov, spec, tags)?;
    let log_n: Vec<f64> = rows.iter().map(|r| r[1]).collect();

    let constant = ParamMatrix::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[true, true, false, false]), None)?;
    let sized = ParamMatrix::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[true, true, true, false]), None)?;
    let plan = NestedSimPlan::default();
    let opts = InferenceOptions::default();

    for (label, template) in [("constant edges", &constant), ("edges ~ log n", &sized)] {
        let fit = fit_mle(&ens, template, &FitOptions::default())?;
        let recs = pearson_residual(&ens, &fit.params, &TargetStatistic::edges(), &plan, &opts)?;
        let anova = size_anova(&recs, &sizes)?;
        let wald = residual_regression(&recs, std::slice::from_ref(&log_n))?;
        println!("{label}");
        println!("  size ANOVA   F({}, {}) = {:.2}, p = {:.2e}", anova.df1, anova.df2, anova.f, anova.p);
        for (n, count, mean) in &anova.groups {
            println!("    n = {n}: {count} networks, mean raw residual {mean:+.3}");
        }
        println!("  regression on log n: slope {:+.3} (se {:.3}), p = {:.2e}", wald.coef[0], wald.se[0], wald.p);
        for row in heterogeneity_sd(&recs, &groups)? {
            println!("  residual sd [{}] {:.3} over {}", row.group, row.sd, row.count);
        }
    }
    Ok(())
}
