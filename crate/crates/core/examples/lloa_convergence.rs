//! Iteration trace of the lazy outer approximation, cold and warm started,
//! against the conic optimum.
//!
//! cargo run --example lloa_convergence -- case118 1e-6

use lineloss::cases;
use lineloss::dispatch::{solve_llqcp, solve_lloa, LloaOptions, QcpBackend};
use lineloss::kernel::SusceptanceSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "case118".into());
    let epsilon: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-3);
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    let target = solve_llqcp(&net, &sys, QcpBackend::Conic)?.objective;
    println!("conic optimum {target:.6}");

    for warm_start in [false, true] {
        let run = solve_lloa(&net, &sys, &LloaOptions { epsilon, warm_start, ..Default::default() })?;
        println!();
        println!("{} start, ε = {epsilon:e}", if warm_start { "warm" } else { "cold" });
        println!("{:>4} {:>16} {:>11} {:>11} {:>6} {:>7} {:>5}", "k", "objective", "Δ", "to conic", "cuts", "simplex", "warm");
        for it in &run.trace {
            println!(
                "{:>4} {:>16.6} {:>11.3e} {:>11.3e} {:>6} {:>7} {:>5}",
                it.index,
                it.objective,
                it.delta,
                (target - it.objective) / target,
                it.cuts,
                it.solver_iterations,
                it.warm
            );
        }
        let s = &run.solution;
        let est: f64 = s.loss_est.as_ref().map_or(0.0, |v| v.iter().sum());
        println!(
            "{} iterations, {} points; estimated losses {est:.6}, quadratic {:.6}; flags {:?}",
            s.iterations,
            run.points,
            s.total_true_losses(),
            s.flags
        );
    }
    Ok(())
}
