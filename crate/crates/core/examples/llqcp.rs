//! Quadratic loss model solved with conic constraints and with a static
//! envelope of tangent cuts of growing size.
//!
//! cargo run --example llqcp -- case30

use lineloss::cases;
use lineloss::dispatch::{solve_llqcp, QcpBackend};
use lineloss::kernel::SusceptanceSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case14".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;

    let conic = solve_llqcp(&net, &sys, QcpBackend::Conic)?;
    println!(
        "conic: objective {:.4}, losses {:.6}, {} cones, {:.1} ms",
        conic.objective,
        conic.loss_total,
        conic.loss_constraints,
        conic.solve_time.as_secs_f64() * 1e3
    );
    println!("{:>9} {:>14} {:>10} {:>10} {:>9}", "tangents", "objective", "gap %", "losses", "ms");
    for h in [3, 5, 9, 17, 33, 65, 129] {
        let s = solve_llqcp(&net, &sys, QcpBackend::StaticOa { tangents: h })?;
        println!(
            "{h:>9} {:>14.4} {:>10.4} {:>10.6} {:>9.1}",
            s.objective,
            100.0 * (s.objective - conic.objective) / conic.objective,
            s.loss_total,
            s.solve_time.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
