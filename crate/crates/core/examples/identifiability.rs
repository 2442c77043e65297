//! Identifiability check: complete-data versus observed-data information.
//!
//! Egocentric sampling of three-node networks hides the only dyad that
//! can close a triangle, so the triangle coefficient is not identified
//! even though it would be with every dyad observed.

use netensemble::diagnostics::{check_identifiability, DEFAULT_REL_TOL};
use netensemble::inference::InferenceOptions;
use netensemble::{Ensemble, Network, ParamMatrix, StatisticSpec};

fn report(label: &str, ens: &Ensemble) -> Result<(), Box<dyn std::error::Error>> {
    let b = ParamMatrix::zeros(1, ens.spec().p());
    let rep = check_identifiability(ens, &b, &InferenceOptions::default(), DEFAULT_REL_TOL)?;
    println!("{label}: {}", rep.cause.as_str());
    println!("  complete-data det {:.3e}, observed-data det {:.3e}", rep.complete_det, rep.fisher_det);
    for dir in &rep.fisher_null {
        let load: Vec<String> = dir.loadings.iter().map(|(n, w)| format!("{n} {w:+.3}")).collect();
        println!("  null direction (eigenvalue {:.1e}): {}", dir.eigenvalue, load.join(", "));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = StatisticSpec::edges_twostars_triangles();
    let full: Vec<Network> = (0..10).map(|s| Network::new(format!("f{s}"), 3)).collect::<Result<_, _>>()?;
    let ego: Vec<Network> = full
        .iter()
        .map(|n| {
            let mut e = n.clone();
            e.set_egocentric(0)?;
            Ok(e)
        })
        .collect::<Result<_, netensemble::graph::GraphError>>()?;

    report("fully observed", &Ensemble::simple(full, spec.clone())?)?;
    report("egocentric", &Ensemble::simple(ego, spec.clone())?)?;

    // Two-stars cannot be told apart from edges in two-node networks.
    let pairs: Vec<Network> = (0..10).map(|s| Network::new(format!("p{s}"), 2)).collect::<Result<_, _>>()?;
    let two = StatisticSpec::from_terms([netensemble::Term::Edges, netensemble::Term::TwoStars])?;
    report("two-node, edges + twostars", &Ensemble::simple(pairs, two)?)?;
    Ok(())
}
