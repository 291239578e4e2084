//! Computes PTDF rows and DC flows for a case and checks them against the
//! angle solution.
//!
//! cargo run --example ptdf_rows -- case30 [ptdf.csv]

use lineloss::cases;
use lineloss::kernel::SusceptanceSystem;
use std::fs::File;
use std::io::BufWriter;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "case14".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    println!(
        "{}: {} buses, {} branches, {} factorization",
        net.name,
        sys.n_buses(),
        sys.n_branches(),
        if sys.is_sparse() { "sparse" } else { "dense" }
    );

    // Injections: every load served from the slack bus.
    let mut p: Vec<f64> = net.buses.iter().map(|b| -b.pd).collect();
    p[net.slack()] += net.total_demand();
    let (theta, flows) = sys.dc_flows(&p, false)?;

    let mut worst: f64 = 0.0;
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let via_ptdf: f64 = sys.ptdf_row(k).iter().zip(&p).map(|(a, b)| a * b).sum();
        worst = worst.max((via_ptdf - flows[k]).abs());
    }
    println!("max |PTDF·p − b·Δθ| = {worst:.2e}");
    println!("max |θ| = {:.4} rad", theta.iter().fold(0.0_f64, |a, t| a.max(t.abs())));

    for k in 0..net.branches.len().min(5) {
        let row = sys.ptdf_row(k);
        let (imax, vmax) = row
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
        println!("branch {k:>3}: flow {:>8.4} pu, largest factor {vmax:+.4} at bus {}", flows[k], net.buses[imax].number);
    }

    if let Some(path) = args.next() {
        sys.write_ptdf_csv(BufWriter::new(File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
