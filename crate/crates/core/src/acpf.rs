//! AC power flow (polar Newton–Raphson with PV→PQ switching) and
//! constraint-violation reporting for restored dispatches.
//!
//! The engine does not enforce operating limits: generator active outputs are
//! taken from the dispatch, except at the slack bus, which absorbs the active
//! mismatch including losses.

use crate::dispatch::{DispatchSolution, Method};
use crate::network::{BusKind, PowerNetwork};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_NEWTON: usize = 30;
pub const DEFAULT_MAX_SWITCHING: usize = 10;
/// Violations at or below this magnitude are not reported.
pub const DUST_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_newton: usize,
    pub max_switching: usize,
    /// Enforce generator reactive limits by PV→PQ switching.
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_newton: DEFAULT_MAX_NEWTON,
            max_switching: DEFAULT_MAX_SWITCHING,
            enforce_q_limits: true,
        }
    }
}

/// Branch admittance blocks `[Yff Yft; Ytf Ytt]` of the π-model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

pub fn branch_admittance(net: &PowerNetwork, k: usize) -> BranchAdmittance {
    let br = &net.branches[k];
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let half_charge = Complex64::new(0.0, br.charging / 2.0);
    let ratio = if br.tap == 0.0 { 1.0 } else { br.tap };
    let tap = Complex64::from_polar(ratio, br.shift);
    BranchAdmittance {
        ff: (ys + half_charge) / (ratio * ratio),
        ft: -ys / tap.conj(),
        tf: -ys / tap,
        tt: ys + half_charge,
    }
}

/// Dense bus admittance matrix over in-service branches and bus shunts.
pub fn build_ybus(net: &PowerNetwork) -> DMatrix<Complex64> {
    let n = net.n_buses();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let a = branch_admittance(net, k);
        y[(br.from, br.from)] += a.ff;
        y[(br.from, br.to)] += a.ft;
        y[(br.to, br.from)] += a.tf;
        y[(br.to, br.to)] += a.tt;
    }
    for (i, b) in net.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(b.gs, b.bs);
    }
    y
}

/// Fixed data of one Newton solve: admittances, injections and bus types.
///
/// Unknowns are ordered `[θ_i for i ≠ slack, |V_i| for PQ buses]`; residual
/// rows are `[P_i for i ≠ slack, Q_i for PQ buses]`.
#[derive(Debug, Clone)]
pub struct PowerFlowProblem {
    pub ybus: DMatrix<Complex64>,
    pub p_spec: Vec<f64>,
    pub q_spec: Vec<f64>,
    pub kinds: Vec<BusKind>,
}

impl PowerFlowProblem {
    pub fn new(ybus: DMatrix<Complex64>, p_spec: Vec<f64>, q_spec: Vec<f64>, kinds: Vec<BusKind>) -> Self {
        PowerFlowProblem {
            ybus,
            p_spec,
            q_spec,
            kinds,
        }
    }

    fn angle_buses(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] != BusKind::Slack).collect()
    }

    fn pq_buses(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] == BusKind::Pq).collect()
    }

    pub fn n_unknowns(&self) -> usize {
        self.angle_buses().len() + self.pq_buses().len()
    }

    /// Complex power injection `S = V ⊙ conj(Y V)`.
    pub fn injections(&self, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
        let v = voltages(vm, va);
        let i = &self.ybus * DVector::from_column_slice(&v);
        v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
    }

    pub fn residual(&self, vm: &[f64], va: &[f64]) -> Vec<f64> {
        let s = self.injections(vm, va);
        let mut f: Vec<f64> = self.angle_buses().iter().map(|&i| s[i].re - self.p_spec[i]).collect();
        f.extend(self.pq_buses().iter().map(|&i| s[i].im - self.q_spec[i]));
        f
    }

    /// Analytic Jacobian of [`residual`](Self::residual).
    pub fn jacobian(&self, vm: &[f64], va: &[f64]) -> DMatrix<f64> {
        let n = vm.len();
        let v = voltages(vm, va);
        let vcol = DVector::from_column_slice(&v);
        let ibus = &self.ybus * &vcol;
        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let vn: Vec<Complex64> = v.iter().zip(vm).map(|(v, m)| v / *m).collect();
        let j = Complex64::new(0.0, 1.0);
        let ds_da = |r: usize, c: usize| -> Complex64 {
            let mut term = -self.ybus[(r, c)] * v[c];
            if r == c {
                term += ibus[r];
            }
            j * v[r] * term.conj()
        };
        let ds_dm = |r: usize, c: usize| -> Complex64 {
            let mut val = v[r] * (self.ybus[(r, c)] * vn[c]).conj();
            if r == c {
                val += ibus[r].conj() * vn[r];
            }
            val
        };
        let ang = self.angle_buses();
        let pq = self.pq_buses();
        let m = ang.len() + pq.len();
        let mut jac = DMatrix::zeros(m, m);
        for (ri, &r) in ang.iter().enumerate() {
            for (ci, &c) in ang.iter().enumerate() {
                jac[(ri, ci)] = ds_da(r, c).re;
            }
            for (ci, &c) in pq.iter().enumerate() {
                jac[(ri, ang.len() + ci)] = ds_dm(r, c).re;
            }
        }
        for (ri, &r) in pq.iter().enumerate() {
            for (ci, &c) in ang.iter().enumerate() {
                jac[(ang.len() + ri, ci)] = ds_da(r, c).im;
            }
            for (ci, &c) in pq.iter().enumerate() {
                jac[(ang.len() + ri, ang.len() + ci)] = ds_dm(r, c).im;
            }
        }
        debug_assert_eq!(n, self.kinds.len());
        jac
    }

    /// Newton iterations from `(vm, va)` in place. Returns
    /// `(converged, iterations, final ∞-norm mismatch)`.
    pub fn newton(
        &self,
        vm: &mut [f64],
        va: &mut [f64],
        tolerance: f64,
        max_iter: usize,
    ) -> (bool, usize, f64) {
        let ang = self.angle_buses();
        let pq = self.pq_buses();
        let mut f = self.residual(vm, va);
        let mut norm = inf_norm(&f);
        let mut it = 0;
        while norm > tolerance {
            if it >= max_iter || !norm.is_finite() {
                return (false, it, norm);
            }
            let jac = self.jacobian(vm, va);
            let rhs = DVector::from_vec(f.iter().map(|x| -x).collect());
            let Some(dx) = jac.lu().solve(&rhs) else {
                return (false, it, norm);
            };
            for (k, &i) in ang.iter().enumerate() {
                va[i] += dx[k];
            }
            for (k, &i) in pq.iter().enumerate() {
                vm[i] += dx[ang.len() + k];
            }
            it += 1;
            f = self.residual(vm, va);
            norm = inf_norm(&f);
        }
        (true, it, norm)
    }
}

fn voltages(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solved (or abandoned) AC operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub kinds: Vec<BusKind>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub mismatch: f64,
    /// Newton steps summed over all switching rounds.
    pub iterations: usize,
    pub switching_rounds: usize,
    pub converged: bool,
    /// Active output change at the slack generator relative to the dispatch.
    pub slack_pickup: f64,
    pub slack_generator: usize,
    /// Total active losses `Σ Re(S_bus)` at the solution.
    pub ac_losses: f64,
}

/// Runs the power flow for a per-generator active dispatch. Voltage
/// setpoints default to the generators' `vg`.
pub fn run_power_flow(
    net: &PowerNetwork,
    dispatch: &[f64],
    v_setpoints: Option<&[f64]>,
    opts: &PowerFlowOptions,
) -> PowerFlowState {
    let n = net.n_buses();
    let slack = net.slack();
    let by_bus = net.generators_by_bus();
    let mut kinds: Vec<BusKind> = (0..n)
        .map(|i| {
            if i == slack {
                BusKind::Slack
            } else if by_bus[i].is_empty() {
                BusKind::Pq
            } else {
                BusKind::Pv
            }
        })
        .collect();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    let mut vset = vec![1.0; n];
    let mut qmax = vec![0.0; n];
    let mut qmin = vec![0.0; n];
    for i in 0..n {
        if let Some(&g) = by_bus[i].first() {
            vset[i] = v_setpoints.map_or(net.generators[g].vg, |v| v[g]);
            vm[i] = vset[i];
        }
        for &g in &by_bus[i] {
            qmax[i] += net.generators[g].qmax;
            qmin[i] += net.generators[g].qmin;
        }
    }
    let mut p_spec: Vec<f64> = net.buses.iter().map(|b| -b.pd).collect();
    for (g, gen) in net.generators.iter().enumerate() {
        if gen.in_service {
            p_spec[gen.bus] += dispatch[g];
        }
    }
    let mut q_spec: Vec<f64> = net.buses.iter().map(|b| -b.qd).collect();
    let ybus = build_ybus(net);

    let mut switched_back = vec![false; n];
    let mut pinned: Vec<Option<bool>> = vec![None; n]; // Some(true) = at qmax
    let mut total_it = 0;
    let mut rounds = 0;
    let (mut converged, mut mismatch);
    loop {
        let problem = PowerFlowProblem::new(ybus.clone(), p_spec.clone(), q_spec.clone(), kinds.clone());
        let (ok, it, norm) = problem.newton(&mut vm, &mut va, opts.tolerance, opts.max_newton);
        total_it += it;
        converged = ok;
        mismatch = norm;
        if !ok || !opts.enforce_q_limits {
            break;
        }
        let s = problem.injections(&vm, &va);
        let mut changed = false;
        for i in 0..n {
            let q_gen = s[i].im + net.buses[i].qd;
            match (kinds[i], pinned[i]) {
                (BusKind::Pv, _) => {
                    if q_gen > qmax[i] + opts.tolerance {
                        kinds[i] = BusKind::Pq;
                        q_spec[i] = qmax[i] - net.buses[i].qd;
                        pinned[i] = Some(true);
                        changed = true;
                    } else if q_gen < qmin[i] - opts.tolerance {
                        kinds[i] = BusKind::Pq;
                        q_spec[i] = qmin[i] - net.buses[i].qd;
                        pinned[i] = Some(false);
                        changed = true;
                    }
                }
                (BusKind::Pq, Some(at_max)) if !switched_back[i] => {
                    let unbinds = if at_max { vm[i] > vset[i] } else { vm[i] < vset[i] };
                    if unbinds {
                        kinds[i] = BusKind::Pv;
                        vm[i] = vset[i];
                        q_spec[i] = -net.buses[i].qd;
                        pinned[i] = None;
                        switched_back[i] = true;
                        changed = true;
                    }
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
        if rounds > opts.max_switching {
            converged = false;
            break;
        }
    }

    let problem = PowerFlowProblem::new(ybus, p_spec, q_spec, kinds.clone());
    let s = problem.injections(&vm, &va);
    let mut pg = dispatch.to_vec();
    let slack_gen = by_bus[slack][0];
    let others: f64 = by_bus[slack].iter().skip(1).map(|&g| dispatch[g]).sum();
    pg[slack_gen] = s[slack].re + net.buses[slack].pd - others;
    let mut qg = vec![0.0; net.generators.len()];
    for i in 0..n {
        let gens = &by_bus[i];
        if gens.is_empty() {
            continue;
        }
        let q_bus = s[i].im + net.buses[i].qd;
        let span: f64 = gens.iter().map(|&g| net.generators[g].qmax - net.generators[g].qmin).sum();
        if span > 0.0 {
            for &g in gens {
                let gen = &net.generators[g];
                qg[g] = gen.qmin + (q_bus - qmin[i]) * (gen.qmax - gen.qmin) / span;
            }
        } else {
            for &g in gens {
                qg[g] = q_bus / gens.len() as f64;
            }
        }
    }
    PowerFlowState {
        ac_losses: s.iter().map(|x| x.re).sum(),
        slack_pickup: pg[slack_gen] - dispatch[slack_gen],
        slack_generator: slack_gen,
        vm,
        va,
        kinds,
        pg,
        qg,
        mismatch,
        iterations: total_it,
        switching_rounds: rounds,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ViolationSection {
    pub count: usize,
    pub max: f64,
}

impl ViolationSection {
    fn record(&mut self, v: f64) {
        if v > DUST_TOLERANCE {
            self.count += 1;
            self.max = self.max.max(v);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    /// False when the power flow did not converge; sections are then empty.
    pub valid: bool,
    pub active: ViolationSection,
    pub reactive: ViolationSection,
    pub voltage: ViolationSection,
    pub thermal: ViolationSection,
    pub slack_pickup: f64,
    pub ac_losses: f64,
}

/// Counts and largest magnitudes of limit violations at a power-flow state.
pub fn assess_violations(state: &PowerFlowState, net: &PowerNetwork) -> ViolationReport {
    let mut r = ViolationReport {
        valid: state.converged,
        active: ViolationSection::default(),
        reactive: ViolationSection::default(),
        voltage: ViolationSection::default(),
        thermal: ViolationSection::default(),
        slack_pickup: state.slack_pickup,
        ac_losses: state.ac_losses,
    };
    if !state.converged {
        return r;
    }
    for (g, gen) in net.generators.iter().enumerate() {
        if !gen.in_service {
            continue;
        }
        r.active.record((state.pg[g] - gen.pmax).max(gen.pmin - state.pg[g]));
        r.reactive.record((state.qg[g] - gen.qmax).max(gen.qmin - state.qg[g]));
    }
    for (i, b) in net.buses.iter().enumerate() {
        r.voltage.record((state.vm[i] - b.vmax).max(b.vmin - state.vm[i]));
    }
    let v = voltages(&state.vm, &state.va);
    for (k, br) in net.branches.iter().enumerate() {
        let Some(limit) = br.limit().filter(|_| br.in_service) else {
            continue;
        };
        let a = branch_admittance(net, k);
        let (vf, vt) = (v[br.from], v[br.to]);
        let sf = vf * (a.ff * vf + a.ft * vt).conj();
        let st = vt * (a.tf * vf + a.tt * vt).conj();
        r.thermal.record(sf.norm().max(st.norm()) - limit);
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestorationRow {
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    pub report: ViolationReport,
}

/// Restores each dispatch to an AC operating point and reports violations,
/// one row per input in input order.
pub fn restore_and_compare(net: &PowerNetwork, solutions: &[DispatchSolution]) -> Vec<RestorationRow> {
    restore_dispatches(
        net,
        &solutions.iter().map(|s| (s.method, s.pg.clone())).collect::<Vec<_>>(),
    )
}

/// As [`restore_and_compare`], from bare `(method, pg)` pairs.
pub fn restore_dispatches(net: &PowerNetwork, dispatches: &[(Method, Vec<f64>)]) -> Vec<RestorationRow> {
    dispatches
        .par_iter()
        .map(|(method, pg)| {
            let state = run_power_flow(net, pg, None, &PowerFlowOptions::default());
            RestorationRow {
                method: *method,
                converged: state.converged,
                iterations: state.iterations,
                report: assess_violations(&state, net),
            }
        })
        .collect()
}

const SECTIONS: [&str; 4] = ["active", "reactive", "voltage", "thermal"];

fn sections(r: &ViolationReport) -> [ViolationSection; 4] {
    [r.active, r.reactive, r.voltage, r.thermal]
}

/// CSV with columns `method, converged, <section>_viol, <section>_max, …,
/// slack_pickup, ac_losses`.
pub fn write_restoration_csv<W: Write>(rows: &[RestorationRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string(), "converged".to_string()];
    for s in SECTIONS {
        header.push(format!("{s}_viol"));
        header.push(format!("{s}_max"));
    }
    header.push("slack_pickup".into());
    header.push("ac_losses".into());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.method.to_string(), row.converged.to_string()];
        for s in sections(&row.report) {
            rec.push(s.count.to_string());
            rec.push(format!("{:.6}", s.max));
        }
        rec.push(format!("{:.6}", row.report.slack_pickup));
        rec.push(format!("{:.6}", row.report.ac_losses));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one line per method, `#viol` and `Max` per section,
/// then slack pickup and AC losses.
pub fn format_restoration_table(rows: &[RestorationRow]) -> String {
    let mut s = format!("{:<8}", "method");
    for name in SECTIONS {
        s.push_str(&format!(" | {:^17}", name));
    }
    s.push_str(&format!(" | {:>8} {:>8}\n", "slack", "AC"));
    s.push_str(&format!("{:<8}", ""));
    for _ in SECTIONS {
        s.push_str(&format!(" | {:>6} {:>10}", "#viol", "Max"));
    }
    s.push_str(&format!(" | {:>8} {:>8}\n", "pickup", "losses"));
    for row in rows {
        s.push_str(&format!("{:<8}", row.method.to_string()));
        if !row.converged {
            s.push_str(" | power flow did not converge\n");
            continue;
        }
        for sec in sections(&row.report) {
            s.push_str(&format!(" | {:>6} {:>10.4}", sec.count, sec.max));
        }
        s.push_str(&format!(
            " | {:>8.4} {:>8.4}\n",
            row.report.slack_pickup, row.report.ac_losses
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{bus, line, unit};

    fn two_bus(load: f64) -> PowerNetwork {
        PowerNetwork::new(
            "two",
            100.0,
            vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, load)],
            vec![line(0, 1, 0.01, 0.1)],
            vec![unit(0, 0.0, 5.0, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn flat_case_converges_immediately() {
        let net = two_bus(0.0);
        let st = run_power_flow(&net, &[0.0], None, &PowerFlowOptions::default());
        assert!(st.converged);
        assert!(st.iterations <= 2);
        assert!(st.vm.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(st.va.iter().all(|&a| a.abs() < 1e-12));
    }

    #[test]
    fn voltage_section_counts() {
        let net = two_bus(0.0);
        let mut st = run_power_flow(&net, &[0.0], None, &PowerFlowOptions::default());
        let mut tight = net.clone();
        tight.buses[1].vmin = 0.95;
        st.vm[1] = 0.93;
        let r = assess_violations(&st, &tight);
        assert_eq!(r.voltage.count, 1);
        assert!((r.voltage.max - 0.02).abs() < 1e-12);
    }

    #[test]
    fn q_limit_switches_to_pq() {
        let mut net = PowerNetwork::new(
            "pv",
            100.0,
            vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pv, 0.5)],
            vec![line(0, 1, 0.01, 0.1)],
            vec![unit(0, 0.0, 5.0, 10.0), unit(1, 0.0, 1.0, 10.0)],
        )
        .unwrap();
        net.buses[1].qd = 0.4;
        net.generators[1].qmax = 0.0;
        net.generators[1].qmin = -1.0;
        net.generators[1].vg = 1.05;
        let st = run_power_flow(&net, &[0.0, 0.2], None, &PowerFlowOptions::default());
        assert!(st.converged);
        assert_eq!(st.kinds[1], BusKind::Pq);
        assert!(st.qg[1].abs() < 1e-7);
        assert_eq!(st.pg[1], 0.2);
    }
}
