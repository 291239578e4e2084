//! Solves every dispatch method on the bundled cases and prints objective
//! gap, dispatch MAE and losses against the quadratic-loss reference.
//!
//! cargo run --example compare_methods [case ...]

use lineloss::dispatch::Method;
use lineloss::experiments::{compare_methods, format_metric_table};
use lineloss::kernel::SusceptanceSystem;
use lineloss::cases;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut names: Vec<String> = std::env::args().skip(1).collect();
    if names.is_empty() {
        names = cases::BUNDLED.iter().map(|s| s.to_string()).collect();
    }
    for name in names {
        let net = cases::load(&name)?;
        let sys = SusceptanceSystem::new(&net)?;
        let (rows, sols) = compare_methods(&name, &net, &sys, &Method::ALL, None)?;
        print!("{}", format_metric_table(&rows));
        for s in &sols {
            println!(
                "  {:<6} true losses {:.6}  solve {:.1} ms  flags {:?}",
                s.method,
                s.total_true_losses(),
                s.solve_time.as_secs_f64() * 1e3,
                s.flags
            );
        }
        println!();
    }
    Ok(())
}
