//! Lossless DC economic dispatch in both the angle and PTDF forms.
//!
//! cargo run --example dc_dispatch -- case118

use lineloss::cases;
use lineloss::dispatch::{solve_vanilla_dc, DcVariant};
use lineloss::kernel::SusceptanceSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case14".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;

    let angle = solve_vanilla_dc(&net, &sys, DcVariant::Angle)?;
    let ptdf = solve_vanilla_dc(&net, &sys, DcVariant::Ptdf)?;

    let diff = angle
        .pg
        .iter()
        .zip(&ptdf.pg)
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    println!("objective  angle {:.4}  ptdf {:.4}", angle.objective, ptdf.objective);
    println!("max per-generator difference {diff:.2e} pu");
    println!("lazy thermal rounds (ptdf) {}", ptdf.iterations);
    println!("losses the dispatch ignores: {:.4} pu", angle.total_true_losses());
    println!();
    println!("{:>4} {:>6} {:>10} {:>10}", "gen", "bus", "pg", "pmax");
    for (g, gen) in net.generators.iter().enumerate().filter(|(_, g)| g.in_service) {
        println!("{g:>4} {:>6} {:>10.4} {:>10.4}", net.buses[gen.bus].number, angle.pg[g], gen.pmax);
    }
    Ok(())
}
