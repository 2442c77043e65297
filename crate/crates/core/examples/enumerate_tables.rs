//! Exact enumeration of a three-node network whose (1,2) dyad is missing.
//!
//! Prints every state of the full graph with its statistics, then the
//! conditional expectation of the statistics for each observed pattern.

use netensemble::inference::{conditional_expectation_table, enumerate_moments, enumerate_states, DEFAULT_ENUM_CAP};
use netensemble::{Network, StatisticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = StatisticSpec::edges_twostars_triangles();
    let mut net = Network::new("triad", 3)?;
    net.set_missing(net.dyad(1, 2)?, true);

    let table = enumerate_states(&net, &spec, false, DEFAULT_ENUM_CAP)?;
    println!("{:<18} {:?}", "present dyads", spec.names());
    for (code, stats) in &table.states {
        let present: Vec<String> = table
            .dyads
            .iter()
            .zip(table.bits(*code))
            .filter(|(_, on)| *on)
            .map(|(d, _)| format!("{}-{}", d.i, d.j))
            .collect();
        println!("{:<18} {stats:?}", format!("{{{}}}", present.join(",")));
    }

    let theta = [0.0, 0.0, 0.0];
    let (observed, rows) = conditional_expectation_table(&net, &spec, &theta, DEFAULT_ENUM_CAP)?;
    println!("\nobserved dyads {:?}", observed.iter().map(|d| (d.i, d.j)).collect::<Vec<_>>());
    for row in &rows {
        println!("  {:?}  p = {:.3}  E[g | obs] = {:?}", row.observed_values, row.prob, row.mean);
    }

    let m = enumerate_moments(&net, &spec, &theta, false, DEFAULT_ENUM_CAP)?;
    println!("\nunconditional mean {:?}", m.mean.as_slice());
    println!("covariance\n{:.4}", m.cov);
    Ok(())
}
