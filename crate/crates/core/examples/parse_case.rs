//! Loads a MATPOWER case (bundled name or file path), prints a summary and
//! writes the per-unit JSON form.
//!
//! cargo run --example parse_case -- case118 /tmp/case118.json

use lineloss::cases;
use lineloss::network::validate_connectivity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "case14".into());
    let net = cases::load(&name)?;

    let in_service = net.branches.iter().filter(|b| b.in_service).count();
    let limited = net.branches.iter().filter(|b| b.limit().is_some()).count();
    let resistive = net.branches.iter().filter(|b| b.r > 0.0).count();
    println!("{} (base {} MVA)", net.name, net.base_mva);
    println!("  buses       {}", net.n_buses());
    println!("  branches    {} in service, {} with thermal limits, {} resistive", in_service, limited, resistive);
    println!("  generators  {}", net.generators.len());
    println!("  demand      {:.4} pu", net.total_demand());
    println!("  capacity    {:.4} pu", net.total_capacity());
    println!("  slack bus   {}", net.buses[net.slack()].number);
    println!("  islands     {}", validate_connectivity(&net).len());

    if let Some(path) = args.next() {
        std::fs::write(&path, net.to_json())?;
        println!("wrote {path}");
    }
    Ok(())
}
