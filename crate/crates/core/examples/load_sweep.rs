//! Load-scaling sensitivity sweep: every method over a grid of load levels
//! and noise seeds, averaged per level.
//!
//! cargo run --release --example load_sweep -- case118 out_dir

use lineloss::experiments::{run_sweep, write_exclusions_csv, write_rows_csv, write_series_csv, SweepConfig};
use std::fs::File;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let case = args.next().unwrap_or_else(|| "case14".into());
    let cfg = SweepConfig {
        cases: vec![case],
        seeds: (0..5).collect(),
        ..SweepConfig::default()
    };
    let report = run_sweep(&cfg)?;
    println!(
        "{} instances: {} solved, {} excluded",
        report.total_instances,
        report.rows.len(),
        report.exclusions.len()
    );
    println!("{:<6} {:>5} {:>3} {:>9} {:>10} {:>10} {:>10}", "method", "alpha", "n", "gap %", "MAE", "est", "quadratic");
    for p in &report.series {
        println!(
            "{:<6} {:>5.2} {:>3} {:>9.4} {:>10.6} {:>10.6} {:>10.6}",
            p.method, p.alpha, p.samples, p.gap_pct, p.mae, p.loss_est, p.loss_true
        );
    }
    for f in &report.flags {
        println!("note: {f}");
    }
    if let Some(dir) = args.next().map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        write_rows_csv(&report.rows, File::create(dir.join("rows.csv"))?)?;
        write_series_csv(&report.series, File::create(dir.join("series.csv"))?)?;
        write_exclusions_csv(&report.exclusions, File::create(dir.join("exclusions.csv"))?)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
