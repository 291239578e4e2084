use super::{Model, Sense};
use std::io::{self, Write};

fn lp_name(raw: &str) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.!\"#$%&(),;?@{}~'".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s.insert(0, 'x');
    }
    s
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_terms<W: Write>(out: &mut W, names: &[String], terms: &[(usize, f64)]) -> io::Result<()> {
    if terms.is_empty() {
        return write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
    }
    for &(v, a) in terms {
        let sign = if a < 0.0 { '-' } else { '+' };
        write!(out, " {sign} {} {}", num(a.abs()), names[v])?;
    }
    Ok(())
}

/// Writes the model in CPLEX LP text format. Rotated quadratic constraints
/// become quadratic rows `−L + [ r x² ] ≤ 0`.
pub fn write_lp<W: Write>(model: &Model, mut out: W) -> io::Result<()> {
    let names: Vec<String> = model.names.iter().map(|n| lp_name(n)).collect();
    writeln!(out, "\\ objective offset {}", num(model.offset))?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    let obj: Vec<(usize, f64)> = model
        .cost
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(k, &c)| (k, c))
        .collect();
    write_terms(&mut out, &names, &obj)?;
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (k, row) in model.rows.iter().enumerate() {
        write!(out, " r{k}:")?;
        write_terms(&mut out, &names, &row.coeffs)?;
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(out, " {op} {}", num(row.rhs))?;
    }
    for (k, c) in model.cones.iter().enumerate() {
        write!(out, " q{k}:")?;
        let neg: Vec<(usize, f64)> = c.linear.iter().map(|&(v, a)| (v, -a)).collect();
        write_terms(&mut out, &names, &neg)?;
        writeln!(out, " + [ {} {} ^ 2 ] <= 0", num(c.scale), names[c.quad_var])?;
    }
    writeln!(out, "Bounds")?;
    for (k, name) in names.iter().enumerate() {
        let (lo, up) = (model.lower[k], model.upper[k]);
        if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            writeln!(out, " {name} free")?;
        } else if lo == up {
            writeln!(out, " {name} = {}", num(lo))?;
        } else {
            writeln!(out, " {} <= {name} <= {}", num(lo), num(up))?;
        }
    }
    writeln!(out, "End")
}
