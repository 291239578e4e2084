//! Restores every method's dispatch to an AC operating point with
//! Newton–Raphson and PV→PQ switching, then tabulates limit violations.
//!
//! cargo run --example ac_restoration -- case118 [restoration.csv]

use lineloss::acpf::{format_restoration_table, restore_and_compare, write_restoration_csv};
use lineloss::cases;
use lineloss::dispatch::{solve, DispatchOptions, Method};
use lineloss::kernel::SusceptanceSystem;
use std::fs::File;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "case118".into());
    let net = cases::load(&name)?;
    let sys = SusceptanceSystem::new(&net)?;
    let solutions = Method::ALL
        .iter()
        .map(|&m| solve(&net, &sys, &DispatchOptions::new(m)))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = restore_and_compare(&net, &solutions);
    print!("{}", format_restoration_table(&rows));
    println!();
    for (row, sol) in rows.iter().zip(&solutions) {
        println!(
            "{:<6} Newton steps {:>3}; estimated losses {:.4}, AC losses {:.4}",
            row.method, row.iterations, sol.loss_total, row.report.ac_losses
        );
    }
    if let Some(path) = args.next() {
        write_restoration_csv(&rows, File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
