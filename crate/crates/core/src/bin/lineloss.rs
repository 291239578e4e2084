use clap::{Parser, Subcommand, ValueEnum};
use lineloss::acpf::{format_restoration_table, restore_dispatches, write_restoration_csv};
use lineloss::dispatch::{self, DispatchOptions, DispatchSolution, Method, QcpBackend};
use lineloss::experiments::{
    compare_methods, format_metric_table, run_sweep, write_exclusions_csv, write_rows_csv,
    write_series_csv, write_timing_csv, ReferenceDispatch, SweepConfig,
};
use lineloss::kernel::SusceptanceSystem;
use lineloss::sced::{solve_sced, ScedConfig};
use lineloss::solver::write_lp;
use lineloss::{cases, Error};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Line-loss aware DC dispatch, SCED, AC restoration and sweeps.
#[derive(Parser)]
#[command(name = "lineloss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one dispatch and print the solution as JSON.
    Solve {
        /// Bundled case name or MATPOWER/JSON file.
        #[arg(long)]
        case: String,
        #[arg(long)]
        method: Method,
        /// LLOA stopping tolerance on the relative objective change.
        #[arg(long, default_value_t = dispatch::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Seed LLOA cuts at the lossless DC flows.
        #[arg(long)]
        warm_start: bool,
        /// Replace the LLQCP cone by this many static tangents per branch.
        #[arg(long)]
        tangents: Option<usize>,
        /// Write the final model in LP format.
        #[arg(long)]
        write_lp: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Reserve-constrained dispatch.
    Sced {
        #[arg(long)]
        case: String,
        #[arg(long)]
        method: Method,
        /// TOML or JSON reserve/penalty settings.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run AC power flow from saved dispatches and report limit violations.
    Restore {
        #[arg(long)]
        case: String,
        /// Solution files written by `solve` or `sced`.
        #[arg(long, num_args = 1.., required = true)]
        solutions: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Load-perturbation sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for CSV and JSON files.
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
    /// Objective gap, MAE and losses of every method on the given cases.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Cases to compare; defaults to every bundled case.
        #[arg(long)]
        case: Vec<String>,
        /// External reference dispatch (JSON with `objective` and `pg`).
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load(case: &str) -> Result<(lineloss::network::PowerNetwork, SusceptanceSystem), Error> {
    let net = cases::load(case)?;
    let sys = SusceptanceSystem::new(&net)?;
    Ok((net, sys))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve {
            case,
            method,
            epsilon,
            warm_start,
            tangents,
            write_lp: lp,
            out,
        } => {
            if !(epsilon > 0.0) {
                return Err(Error::Input(format!("epsilon must be positive, got {epsilon}")));
            }
            let (net, sys) = load(&case)?;
            let mut opts = DispatchOptions::new(method);
            opts.lloa.epsilon = epsilon;
            opts.lloa.warm_start = warm_start;
            if let Some(h) = tangents {
                opts.qcp_backend = QcpBackend::StaticOa { tangents: h };
            }
            let mut f = dispatch::formulate(&net, &sys, &opts, Default::default())?;
            f.run()?;
            if let Some(p) = lp {
                write_lp(f.model(), BufWriter::new(File::create(p)?))?;
            }
            emit(&f.solution().to_json(), out.as_deref())
        }
        Command::Sced {
            case,
            method,
            config,
            out,
        } => {
            let text = read(&config)?;
            let cfg = if is_json(&config) {
                ScedConfig::from_json(&text)
            } else {
                ScedConfig::from_toml(&text)
            }
            .map_err(Error::Input)?;
            let (net, sys) = load(&case)?;
            let sol = solve_sced(&net, &sys, &DispatchOptions::new(method), &cfg)?;
            emit(&sol.to_json(), out.as_deref())
        }
        Command::Restore {
            case,
            solutions,
            format,
        } => {
            let net = cases::load(&case)?;
            let mut dispatches = Vec::new();
            for p in &solutions {
                let (m, pg) = DispatchSolution::dispatch_from_json(&read(p)?)
                    .map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
                if pg.len() != net.generators.len() {
                    return Err(Error::Input(format!(
                        "{}: {} generators, case has {}",
                        p.display(),
                        pg.len(),
                        net.generators.len()
                    )));
                }
                dispatches.push((m, pg));
            }
            let rows = restore_dispatches(&net, &dispatches);
            match format {
                Format::Table => print!("{}", format_restoration_table(&rows)),
                Format::Csv => write_restoration_csv(&rows, io::stdout().lock())
                    .map_err(|e| Error::Io(e.into()))?,
                Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("serializes")),
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg = SweepConfig::parse(&read(&config)?).map_err(Error::Input)?;
            let report = run_sweep(&cfg).map_err(Error::Input)?;
            fs::create_dir_all(&out)?;
            let csv_err = |e: csv::Error| Error::Io(e.into());
            write_rows_csv(&report.rows, File::create(out.join("rows.csv"))?).map_err(csv_err)?;
            write_timing_csv(&report.rows, File::create(out.join("timing.csv"))?).map_err(csv_err)?;
            write_series_csv(&report.series, File::create(out.join("series.csv"))?).map_err(csv_err)?;
            write_exclusions_csv(&report.exclusions, File::create(out.join("exclusions.csv"))?)
                .map_err(csv_err)?;
            fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&report).expect("serializes"),
            )?;
            println!(
                "{} instances: {} solved, {} excluded; output in {}",
                report.total_instances,
                report.rows.len(),
                report.exclusions.len(),
                out.display()
            );
            for f in &report.flags {
                println!("note: {f}");
            }
            Ok(())
        }
        Command::Report {
            format,
            case,
            reference,
        } => {
            let names = if case.is_empty() {
                cases::BUNDLED.iter().map(|s| s.to_string()).collect()
            } else {
                case
            };
            let reference = match reference {
                Some(p) => Some(ReferenceDispatch::from_json(&read(&p)?).map_err(Error::Input)?),
                None => None,
            };
            let mut rows = Vec::new();
            for name in &names {
                let (net, sys) = load(name)?;
                rows.extend(compare_methods(name, &net, &sys, &Method::ALL, reference.as_ref())?.0);
            }
            match format {
                Format::Table => print!("{}", format_metric_table(&rows)),
                Format::Csv => write_rows_csv(&rows, io::stdout().lock()).map_err(|e| Error::Io(e.into()))?,
                Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("serializes")),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
