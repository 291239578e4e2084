//! Reader and writer for the MATPOWER `.m` case subset: `mpc.baseMVA`,
//! `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`. Other assignments
//! (cell arrays of names, area tables) are skipped.

use super::{Branch, Bus, BusKind, CaseError, CostCurve, Generator, PowerNetwork};
use std::collections::HashMap;
use std::fmt::Write as _;

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<(usize, f64)>,
    tables: HashMap<String, Vec<Row>>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    tok.parse::<f64>()
        .map_err(|_| CaseError::syntax(line, format!("invalid number '{tok}'")))
}

fn tokenize(raw: &str, line: usize) -> Result<Vec<f64>, CaseError> {
    raw.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t, line))
        .collect()
}

fn lex(text: &str) -> Result<RawCase, CaseError> {
    enum State {
        Top,
        Matrix { name: String, rows: Vec<Row> },
        Cell,
    }
    let mut case = RawCase::default();
    let mut state = State::Top;

    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full).trim();
        if line.is_empty() {
            continue;
        }
        state = match state {
            State::Cell => {
                if line.contains('}') {
                    State::Top
                } else {
                    State::Cell
                }
            }
            State::Matrix { name, mut rows } => {
                let (body, closed) = match line.find(']') {
                    Some(p) => (&line[..p], true),
                    None => (line, false),
                };
                for chunk in body.split(';') {
                    let values = tokenize(chunk, line_no)?;
                    if !values.is_empty() {
                        rows.push(Row {
                            line: line_no,
                            values,
                        });
                    }
                }
                if closed {
                    case.tables.insert(name, rows);
                    State::Top
                } else {
                    State::Matrix { name, rows }
                }
            }
            State::Top => {
                if let Some(rest) = line.strip_prefix("function") {
                    if let Some((_, name)) = rest.split_once('=') {
                        case.name = Some(name.trim().trim_end_matches(';').to_string());
                    }
                    State::Top
                } else if let Some(rest) = line.strip_prefix("mpc.") {
                    let (lhs, rhs) = rest.split_once('=').ok_or_else(|| {
                        CaseError::syntax(line_no, "expected assignment after 'mpc.'")
                    })?;
                    let field = lhs.trim().to_string();
                    let rhs = rhs.trim();
                    if let Some(after) = rhs.strip_prefix('[') {
                        let (body, closed) = match after.find(']') {
                            Some(p) => (&after[..p], true),
                            None => (after, false),
                        };
                        let mut rows = Vec::new();
                        for chunk in body.split(';') {
                            let values = tokenize(chunk, line_no)?;
                            if !values.is_empty() {
                                rows.push(Row {
                                    line: line_no,
                                    values,
                                });
                            }
                        }
                        if closed {
                            case.tables.insert(field, rows);
                            State::Top
                        } else {
                            State::Matrix { name: field, rows }
                        }
                    } else if rhs.starts_with('{') {
                        if rhs.contains('}') {
                            State::Top
                        } else {
                            State::Cell
                        }
                    } else {
                        if field == "baseMVA" {
                            let v = rhs.trim_end_matches(';').trim();
                            case.base_mva = Some((line_no, parse_number(v, line_no)?));
                        }
                        State::Top
                    }
                } else {
                    return Err(CaseError::syntax(line_no, format!("unexpected statement '{line}'")));
                }
            }
        };
    }
    match state {
        State::Top => Ok(case),
        State::Matrix { name, .. } => Err(CaseError::syntax(
            text.lines().count(),
            format!("unterminated matrix 'mpc.{name}'"),
        )),
        State::Cell => Err(CaseError::syntax(text.lines().count(), "unterminated cell array")),
    }
}

fn require_cols(row: &Row, n: usize, table: &str) -> Result<(), CaseError> {
    if row.values.len() < n {
        return Err(CaseError::syntax(
            row.line,
            format!("{table} row has {} columns, expected at least {n}", row.values.len()),
        ));
    }
    Ok(())
}

fn table<'a>(case: &'a RawCase, name: &str) -> Result<&'a [Row], CaseError> {
    case.tables
        .get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| CaseError::semantic(format!("mpc.{name}"), "missing table"))
}

/// Parses MATPOWER case text into a validated per-unit network.
///
/// Demands, generator limits, shunts and ratings are divided by `baseMVA`;
/// angles are converted to radians. Out-of-service branches and generators
/// are kept with their status flag cleared.
pub fn parse_case(text: &str) -> Result<PowerNetwork, CaseError> {
    let raw = lex(text)?;
    let (_, base) = raw
        .base_mva
        .ok_or_else(|| CaseError::semantic("mpc.baseMVA", "missing"))?;

    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut buses = Vec::new();
    for row in table(&raw, "bus")? {
        require_cols(row, 13, "bus")?;
        let v = &row.values;
        let number = v[0] as u32;
        if v[0] < 1.0 || v[0].fract() != 0.0 {
            return Err(CaseError::syntax(row.line, "bus number must be a positive integer"));
        }
        let kind = match v[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => {
                return Err(CaseError::semantic(
                    format!("bus {number}"),
                    "isolated bus type is not supported",
                ))
            }
            t => return Err(CaseError::syntax(row.line, format!("unknown bus type {t}"))),
        };
        if index.insert(number, buses.len()).is_some() {
            return Err(CaseError::semantic(format!("bus {number}"), "duplicate bus number"));
        }
        buses.push(Bus {
            number,
            kind,
            pd: v[2] / base,
            qd: v[3] / base,
            gs: v[4] / base,
            bs: v[5] / base,
            area: v[6] as u32,
            vm: v[7],
            va: v[8].to_radians(),
            base_kv: v[9],
            zone: v[10] as u32,
            vmax: v[11],
            vmin: v[12],
        });
    }

    let lookup = |num: f64, line: usize, what: &str| -> Result<usize, CaseError> {
        index.get(&(num as u32)).copied().ok_or_else(|| {
            CaseError::syntax(line, format!("{what} references unknown bus {num}"))
        })
    };

    let mut branches = Vec::new();
    for row in table(&raw, "branch")? {
        require_cols(row, 11, "branch")?;
        let v = &row.values;
        branches.push(Branch {
            from: lookup(v[0], row.line, "branch")?,
            to: lookup(v[1], row.line, "branch")?,
            r: v[2],
            x: v[3],
            charging: v[4],
            rate: v[5] / base,
            rate_b: v[6] / base,
            rate_c: v[7] / base,
            tap: v[8],
            shift: v[9].to_radians(),
            in_service: v[10] != 0.0,
            angmin: v.get(11).copied().unwrap_or(-360.0),
            angmax: v.get(12).copied().unwrap_or(360.0),
        });
    }

    let gen_rows = table(&raw, "gen")?;
    let cost_rows = table(&raw, "gencost")?;
    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::semantic(
            "mpc.gencost",
            format!("{} rows for {} generators", cost_rows.len(), gen_rows.len()),
        ));
    }
    let mut generators = Vec::new();
    for (row, cost_row) in gen_rows.iter().zip(cost_rows) {
        require_cols(row, 10, "gen")?;
        let v = &row.values;
        let ramp = v.get(17).copied().unwrap_or(0.0);
        generators.push(Generator {
            bus: lookup(v[0], row.line, "generator")?,
            pg: v[1] / base,
            qg: v[2] / base,
            qmax: v[3] / base,
            qmin: v[4] / base,
            vg: v[5],
            mbase: v[6],
            in_service: v[7] > 0.0,
            pmax: v[8] / base,
            pmin: v[9] / base,
            cost: parse_cost(cost_row, base)?,
            reserve_capable: true,
            ramp_rate: (ramp > 0.0).then_some(ramp / base),
        });
    }

    let name = raw.name.unwrap_or_else(|| "case".to_string());
    let net = PowerNetwork::new(name, base, buses, branches, generators)?;
    net.validate()?;
    Ok(net)
}

fn parse_cost(row: &Row, base: f64) -> Result<CostCurve, CaseError> {
    require_cols(row, 4, "gencost")?;
    let v = &row.values;
    let n = v[3] as usize;
    match v[0] as i64 {
        1 => {
            require_cols(row, 4 + 2 * n, "gencost")?;
            let pts = (0..n)
                .map(|k| (v[4 + 2 * k] / base, v[5 + 2 * k]))
                .collect();
            Ok(CostCurve::PiecewiseLinear(pts))
        }
        2 => {
            require_cols(row, 4 + n, "gencost")?;
            // stored highest degree first
            let coeffs = (0..n)
                .map(|k| v[4 + n - 1 - k] * base.powi(k as i32))
                .collect();
            Ok(CostCurve::Polynomial(coeffs))
        }
        m => Err(CaseError::syntax(row.line, format!("unknown cost model {m}"))),
    }
}

/// Finds a value `w` near `guess` with `forward(w) == target`, so that
/// writing `w` and parsing it back reproduces `target` bit-for-bit.
fn invert(target: f64, guess: f64, forward: impl Fn(f64) -> f64) -> f64 {
    if !guess.is_finite() || guess == 0.0 {
        return guess;
    }
    let bits = guess.to_bits() as i64;
    for step in [0i64, 1, -1, 2, -2, 3, -3, 4, -4] {
        let w = f64::from_bits((bits + step) as u64);
        if forward(w) == target {
            return w;
        }
    }
    guess
}

fn mw(pu: f64, base: f64) -> f64 {
    invert(pu, pu * base, |w| w / base)
}

fn deg(rad: f64) -> f64 {
    invert(rad, rad.to_degrees(), f64::to_radians)
}

/// Writes a network back out as MATPOWER case text in MW/MVAr/degree units.
/// Parsing the output yields a network identical to `net`.
pub fn to_matpower(net: &PowerNetwork) -> String {
    let base = net.base_mva;
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.name);
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base};");
    out.push_str("\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &net.buses {
        let kind = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.number,
            kind,
            mw(b.pd, base),
            mw(b.qd, base),
            mw(b.gs, base),
            mw(b.bs, base),
            b.area,
            b.vm,
            deg(b.va),
            b.base_kv,
            b.zone,
            b.vmax,
            b.vmin
        );
    }
    out.push_str("];\n\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\tQc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\nmpc.gen = [\n");
    for g in &net.generators {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t{};",
            net.buses[g.bus].number,
            mw(g.pg, base),
            mw(g.qg, base),
            mw(g.qmax, base),
            mw(g.qmin, base),
            g.vg,
            g.mbase,
            u8::from(g.in_service),
            mw(g.pmax, base),
            mw(g.pmin, base),
            g.ramp_rate.map_or(0.0, |r| mw(r, base)),
        );
    }
    out.push_str("];\n\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &net.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            net.buses[br.from].number,
            net.buses[br.to].number,
            br.r,
            br.x,
            br.charging,
            mw(br.rate, base),
            mw(br.rate_b, base),
            mw(br.rate_c, base),
            br.tap,
            deg(br.shift),
            u8::from(br.in_service),
            br.angmin,
            br.angmax
        );
    }
    out.push_str("];\n\nmpc.gencost = [\n");
    for g in &net.generators {
        match &g.cost {
            CostCurve::Polynomial(c) => {
                let _ = write!(out, "\t2\t0\t0\t{}", c.len());
                for (k, &pu) in c.iter().enumerate().rev() {
                    let scale = base.powi(k as i32);
                    let _ = write!(out, "\t{}", invert(pu, pu / scale, |w| w * scale));
                }
            }
            CostCurve::PiecewiseLinear(pts) => {
                let _ = write!(out, "\t1\t0\t0\t{}", pts.len());
                for &(p, c) in pts {
                    let _ = write!(out, "\t{}\t{}", mw(p, base), c);
                }
            }
        }
        out.push_str(";\n");
    }
    out.push_str("];\n");
    out
}
