//! Reserve-constrained dispatch: a requirement sweep showing how reserves
//! and the largest-unit contingency move energy cost.
//!
//! cargo run --example sced_reserves -- case14 lloa

use lineloss::cases;
use lineloss::dispatch::{DispatchOptions, Method};
use lineloss::kernel::SusceptanceSystem;
use lineloss::sced::{largest_generator, solve_sced, ScedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "case14".into());
    let method: Method = args.next().unwrap_or_else(|| "lloa".into()).parse()?;
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    let opts = DispatchOptions::new(method);

    let plain = solve_sced(&net, &sys, &opts, &ScedConfig::plain())?;
    println!("{} without reserves: objective {:.4}", method, plain.dispatch.objective);
    if let Some(g) = largest_generator(&net) {
        println!("largest unit: generator {g} ({:.2} pu)", net.generators[g].pmax);
    }
    println!(
        "{:>8} {:>14} {:>12} {:>12} {:>10} {:>7}",
        "R (pu)", "objective", "energy", "penalty", "Σ reserve", "rounds"
    );
    for requirement in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let cfg = ScedConfig { reserve_requirement: requirement, ..ScedConfig::default() };
        let s = solve_sced(&net, &sys, &opts, &cfg)?;
        println!(
            "{requirement:>8.2} {:>14.4} {:>12.4} {:>12.4} {:>10.4} {:>7}",
            s.dispatch.objective,
            s.energy_cost,
            s.penalty_cost,
            s.reserves.iter().sum::<f64>(),
            s.rounds
        );
        for c in s.contingencies.iter().filter(|c| c.violation > 1e-7) {
            println!("         generator {} uncovered by {:.4} pu", c.generator, c.violation);
        }
    }
    Ok(())
}
