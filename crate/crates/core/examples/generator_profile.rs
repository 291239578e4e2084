//! Per-generator dispatch differences against the quadratic-loss reference,
//! ordered by capacity, plus the LLLF flow discrepancy.
//!
//! cargo run --example generator_profile -- case118

use lineloss::cases;
use lineloss::dispatch::{solve, DispatchOptions, Method};
use lineloss::experiments::{generator_diff_profile, lllf_flow_discrepancy};
use lineloss::kernel::SusceptanceSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case118".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    let reference = solve(&net, &sys, &DispatchOptions::new(Method::Llqcp))?;

    for m in [Method::Dc, Method::Lllf, Method::Lloa] {
        let sol = solve(&net, &sys, &DispatchOptions::new(m))?;
        let prof = generator_diff_profile(&net, &sol.pg, &reference.pg, 5);
        println!(
            "{m}: {:.1}% of {} generators within 1e-3 pu; {} differ",
            prof.near_identical_pct,
            prof.entries.len(),
            prof.filtered.len()
        );
        for e in &prof.filtered {
            println!("    gen {:>3} (pmax {:>6.2}) {:+.4} pu", e.generator, e.pmax, e.diff);
        }
        for (lo, hi, c) in &prof.histogram {
            println!("    |diff| in [{lo:.4}, {hi:.4}): {c}");
        }
        if m == Method::Lllf {
            let d = lllf_flow_discrepancy(&net, &sys, &sol)?;
            println!("    LLLF flow vs quadratic model at same dispatch: max {:.5}, mean {:.5} pu", d.max_abs, d.mean_abs);
        }
    }
    Ok(())
}
