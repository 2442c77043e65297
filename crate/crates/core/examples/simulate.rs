//! Sampling from a fitted model: unconditional draws and imputation of
//! missing dyads given the observed ones.

use netensemble::inference::{enumerate_moments, mcmc_sample, SamplerConfig, DEFAULT_ENUM_CAP};
use netensemble::inference::mcmc::sample_networks;
use netensemble::seed;
use netensemble::{Network, StatisticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = StatisticSpec::edges_twostars_triangles();
    let theta = [-0.8, 0.1, 0.4];
    let cfg = SamplerConfig::default();

    let net = Network::new("six", 6)?;
    let draws = mcmc_sample(&net, &spec, &theta, false, 20_000, 1, &cfg)?;
    let exact = enumerate_moments(&net, &spec, &theta, false, DEFAULT_ENUM_CAP)?;
    println!("six nodes, unconditional");
    for (l, name) in spec.names().iter().enumerate() {
        println!("  {name:<10} mcmc {:.4} ± {:.4}   exact {:.4}", draws.mean()[l], draws.mcse()[l], exact.mean[l]);
    }

    // Ego 0 reports ties to everyone; alter ties are unknown.
    let mut ego = Network::from_edges("ego", 6, &[(0, 1), (0, 2), (0, 3)])?;
    ego.set_egocentric(0)?;
    let prepared = spec.prepare(&ego)?;
    let imputed = sample_networks(&ego, &prepared, &theta, true, 5, seed::rng(9), &cfg);
    println!("\nimputations of the alter-alter dyads");
    for y in &imputed {
        let alters: Vec<String> =
            y.edges().into_iter().filter(|d| d.i != 0).map(|d| format!("{}-{}", d.i, d.j)).collect();
        println!("  {:?}  alter ties: {}", prepared.eval(y), alters.join(" "));
    }
    let cond = enumerate_moments(&ego, &spec, &theta, true, DEFAULT_ENUM_CAP)?;
    println!("exact conditional mean {:?}", cond.mean.as_slice());
    Ok(())
}
