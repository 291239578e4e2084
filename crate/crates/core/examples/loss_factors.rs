//! Loss factors at the lossless dispatch, a finite-difference check of the
//! gradient, and the resulting LLLF dispatch.
//!
//! cargo run --example loss_factors -- case14

use lineloss::cases;
use lineloss::dispatch::{quadratic_losses, reference_loss_factors, solve_lllf, LllfOptions};
use lineloss::kernel::SusceptanceSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case14".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    let lf = reference_loss_factors(&net, &sys)?;

    let losses_at = |p: &[f64]| {
        let flows: Vec<f64> = (0..net.branches.len())
            .map(|k| sys.ptdf_row(k).iter().zip(p).map(|(a, b)| a * b).sum())
            .collect();
        quadratic_losses(&net, &flows)
    };
    let reference = losses_at(&lf.ref_injections);
    println!("reference losses {reference:.6} pu, linearized {:.6}", lf.total_loss(&lf.ref_injections));
    println!("Σ D = {:.12}{}", lf.distribution.iter().sum::<f64>(), if lf.uniform_distribution { " (uniform)" } else { "" });

    let h = 1e-5;
    println!("{:>5} {:>12} {:>12} {:>12}", "bus", "LF", "central FD", "D");
    for i in 0..net.n_buses() {
        let mut up = lf.ref_injections.clone();
        let mut dn = lf.ref_injections.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (losses_at(&up) - losses_at(&dn)) / (2.0 * h);
        println!("{:>5} {:>12.6} {:>12.6} {:>12.6}", net.buses[i].number, lf.lf[i], fd, lf.distribution[i]);
    }

    let sol = solve_lllf(&net, &sys, &lf, &LllfOptions::default())?;
    println!();
    println!("LLLF objective {:.4}", sol.objective);
    println!("estimated losses {:.6}, quadratic losses of its flows {:.6}", sol.loss_total, sol.total_true_losses());
    println!("flags {:?}", sol.flags);
    Ok(())
}
