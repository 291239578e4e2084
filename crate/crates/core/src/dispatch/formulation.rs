//! Shared model construction and the lazy solve loops of every method.

use super::cuts::{lloa_cut, static_points, CutPool};
use super::loss_factors::LossFactorData;
use super::{DcVariant, DispatchError, DispatchSolution, LloaIterate, Method, QcpBackend};
use crate::kernel::SusceptanceSystem;
use crate::network::{PowerNetwork, DEFAULT_COST_SEGMENTS};
use crate::solver::{Backend, Model, RowId, Sense, SolveResult, Status};
use std::collections::BTreeSet;
use std::time::Duration;

/// Tolerance for detecting violated lazy rows and clamp activity.
pub(crate) const LAZY_TOLERANCE: f64 = 1e-7;

/// Penalized relaxations of balance and thermal limits. `None` keeps the
/// constraint hard.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoftConstraints {
    pub balance_penalty: Option<f64>,
    pub transmission_penalty: Option<f64>,
}

/// Per-method settings resolved before model construction.
#[derive(Debug, Clone)]
pub(crate) enum MethodConfig {
    Dc(DcVariant),
    Lllf {
        data: LossFactorData,
        max_rounds: usize,
    },
    Llqcp(QcpBackend),
    Lloa {
        epsilon: f64,
        seed: Vec<f64>,
        max_iter: usize,
    },
}

impl MethodConfig {
    fn method(&self) -> Method {
        match self {
            MethodConfig::Dc(_) => Method::Dc,
            MethodConfig::Lllf { .. } => Method::Lllf,
            MethodConfig::Llqcp(_) => Method::Llqcp,
            MethodConfig::Lloa { .. } => Method::Lloa,
        }
    }

    fn uses_ptdf(&self) -> bool {
        matches!(
            self,
            MethodConfig::Dc(DcVariant::Ptdf) | MethodConfig::Lllf { .. }
        )
    }
}

/// A dispatch model under construction or iteration. SCED extends the
/// model through [`Formulation::model_mut`] and re-runs [`Formulation::run`].
pub struct Formulation<'a> {
    net: &'a PowerNetwork,
    sys: &'a SusceptanceSystem,
    config: MethodConfig,
    model: Model,
    pg: Vec<Option<usize>>,
    theta: Vec<usize>,
    p_fwd: Vec<Option<usize>>,
    p_bwd: Vec<Option<usize>>,
    loss: Option<usize>,
    loss_row: Option<RowId>,
    shortage: Option<(usize, usize)>,
    overflow: Vec<Option<usize>>,
    monitored: BTreeSet<(usize, bool)>,
    pool: CutPool,
    loss_constraints: usize,
    last: Option<SolveResult>,
    trace: Vec<LloaIterate>,
    flags: Vec<String>,
    solve_time: Duration,
    lazy_rounds: usize,
}

fn status_error(status: Status) -> DispatchError {
    match status {
        Status::Infeasible => DispatchError::Infeasible,
        Status::Unbounded => DispatchError::Unbounded,
        s => DispatchError::Numeric(s.to_string()),
    }
}

impl<'a> Formulation<'a> {
    pub(crate) fn build(
        net: &'a PowerNetwork,
        sys: &'a SusceptanceSystem,
        config: MethodConfig,
        soft: SoftConstraints,
    ) -> Result<Self, DispatchError> {
        let backend = match &config {
            MethodConfig::Llqcp(QcpBackend::Conic) => Backend::Auto,
            _ => Backend::Highs,
        };
        let mut f = Formulation {
            net,
            sys,
            model: Model::with_backend(backend),
            pg: vec![None; net.generators.len()],
            theta: Vec::new(),
            p_fwd: vec![None; net.branches.len()],
            p_bwd: vec![None; net.branches.len()],
            loss: None,
            loss_row: None,
            shortage: None,
            overflow: vec![None; net.branches.len()],
            monitored: BTreeSet::new(),
            pool: CutPool::default(),
            loss_constraints: 0,
            last: None,
            trace: Vec::new(),
            flags: Vec::new(),
            solve_time: Duration::ZERO,
            lazy_rounds: 0,
            config,
        };
        f.add_generators()?;
        if let Some(pen) = soft.balance_penalty {
            let up = f.model.add_variable("balance_shortage", 0.0, f64::INFINITY, pen)?;
            let down = f.model.add_variable("balance_surplus", 0.0, f64::INFINITY, pen)?;
            f.shortage = Some((up, down));
        }
        if let Some(pen) = soft.transmission_penalty {
            for (k, br) in net.branches.iter().enumerate() {
                if br.in_service && br.limit().is_some() {
                    f.overflow[k] =
                        Some(f.model.add_variable(format!("overflow_{k}"), 0.0, f64::INFINITY, pen)?);
                }
            }
        }
        if f.config.uses_ptdf() {
            f.build_ptdf()?;
        } else {
            f.build_angle()?;
        }
        Ok(f)
    }

    fn add_generators(&mut self) -> Result<(), DispatchError> {
        let mut offset = 0.0;
        for (g, gen) in self.net.generators.iter().enumerate() {
            if !gen.in_service {
                continue;
            }
            let pw = gen.piecewise_cost(DEFAULT_COST_SEGMENTS);
            let segs: Vec<(f64, f64)> = pw.segments().collect();
            let name = format!("pg_{g}");
            if segs.is_empty() {
                self.pg[g] = Some(self.model.add_variable(name, gen.pmin, gen.pmax, 0.0)?);
                offset += pw.base_cost();
            } else if segs.len() == 1 {
                let slope = segs[0].1;
                self.pg[g] = Some(self.model.add_variable(name, gen.pmin, gen.pmax, slope)?);
                offset += pw.base_cost() - slope * gen.pmin;
            } else {
                let pg = self.model.add_variable(name, gen.pmin, gen.pmax, 0.0)?;
                let mut row = vec![(pg, 1.0)];
                for (k, &(w, slope)) in segs.iter().enumerate() {
                    let d = self.model.add_variable(format!("seg_{g}_{k}"), 0.0, w, slope)?;
                    row.push((d, -1.0));
                }
                self.model.add_constraint(&row, Sense::Eq, gen.pmin)?;
                self.pg[g] = Some(pg);
                offset += pw.base_cost();
            }
        }
        self.model.set_objective_offset(offset);
        Ok(())
    }

    fn has_loss_vars(&self) -> bool {
        matches!(
            self.config,
            MethodConfig::Llqcp(_) | MethodConfig::Lloa { .. }
        )
    }

    fn build_angle(&mut self) -> Result<(), DispatchError> {
        let net = self.net;
        let slack = self.sys.slack();
        for i in 0..net.n_buses() {
            let (lo, up) = if i == slack {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            self.theta.push(self.model.add_variable(format!("theta_{i}"), lo, up, 0.0)?);
        }
        let lossy = self.has_loss_vars();
        for (k, br) in net.branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let (lo, up) = match (br.limit(), self.overflow[k]) {
                (Some(t), None) => (-t, t),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let pf = self.model.add_variable(format!("pf_{k}"), lo, up, 0.0)?;
            self.p_fwd[k] = Some(pf);
            let b = self.sys.susceptance(k);
            self.model.add_constraint(
                &[(pf, 1.0), (self.theta[br.from], -b), (self.theta[br.to], b)],
                Sense::Eq,
                0.0,
            )?;
            if lossy {
                let pb = self.model.add_variable(format!("pb_{k}"), lo, up, 0.0)?;
                self.p_bwd[k] = Some(pb);
            }
            if let (Some(t), Some(o)) = (br.limit(), self.overflow[k]) {
                for v in std::iter::once(pf).chain(self.p_bwd[k]) {
                    self.model.add_constraint(&[(v, 1.0), (o, -1.0)], Sense::Le, t)?;
                    self.model.add_constraint(&[(v, 1.0), (o, 1.0)], Sense::Ge, -t)?;
                }
            }
        }
        let by_bus = net.generators_by_bus();
        for i in 0..net.n_buses() {
            let mut row: Vec<(usize, f64)> = by_bus[i]
                .iter()
                .filter_map(|&g| self.pg[g].map(|v| (v, 1.0)))
                .collect();
            for (k, br) in net.branches.iter().enumerate() {
                let Some(pf) = self.p_fwd[k] else { continue };
                if br.from == i {
                    row.push((pf, -1.0));
                }
                if br.to == i {
                    match self.p_bwd[k] {
                        Some(pb) => row.push((pb, -1.0)),
                        None => row.push((pf, 1.0)),
                    }
                }
            }
            if i == slack {
                if let Some((up, down)) = self.shortage {
                    row.push((up, 1.0));
                    row.push((down, -1.0));
                }
            }
            self.model.add_constraint(&row, Sense::Eq, net.buses[i].pd)?;
        }
        match self.config.clone() {
            MethodConfig::Llqcp(QcpBackend::Conic) => {
                for (k, br) in net.branches.iter().enumerate() {
                    if let (Some(pf), Some(pb)) = (self.p_fwd[k], self.p_bwd[k]) {
                        if br.r == 0.0 {
                            self.model.add_constraint(&[(pf, 1.0), (pb, 1.0)], Sense::Ge, 0.0)?;
                        } else {
                            self.model
                                .add_rotated_quadratic(pf, &[(pf, 1.0), (pb, 1.0)], br.r)?;
                        }
                        self.loss_constraints += 1;
                    }
                }
            }
            MethodConfig::Llqcp(QcpBackend::StaticOa { tangents }) => {
                let cap = net.total_capacity();
                for (k, br) in net.branches.iter().enumerate() {
                    let t = br.limit().unwrap_or(cap);
                    for p in static_points(t, tangents) {
                        self.add_cut(k, p)?;
                    }
                }
            }
            MethodConfig::Lloa { seed, max_iter, .. } => {
                let n_in = net.branches.iter().filter(|b| b.in_service).count().max(1);
                self.pool = CutPool::with_capacity(max_iter.max(1) * n_in);
                self.add_point(seed);
            }
            _ => {}
        }
        Ok(())
    }

    fn add_cut(&mut self, branch: usize, p_ref: f64) -> Result<(), DispatchError> {
        let (Some(pf), Some(pb)) = (self.p_fwd[branch], self.p_bwd[branch]) else {
            return Ok(());
        };
        let cut = lloa_cut(self.net.branches[branch].r, p_ref);
        self.model
            .add_constraint(&[(pf, 1.0 - cut.slope), (pb, 1.0)], Sense::Ge, cut.intercept)?;
        self.loss_constraints += 1;
        Ok(())
    }

    /// Adds one linearization point (cuts on every in-service branch).
    fn add_point(&mut self, flows: Vec<f64>) -> bool {
        if !self.pool.push(flows.clone()) {
            return false;
        }
        for k in 0..self.net.branches.len() {
            self.add_cut(k, flows[k]).expect("cut references existing variables");
        }
        true
    }

    pub(crate) fn add_seed_point(&mut self, flows: Vec<f64>) {
        if !self.add_point(flows) {
            self.flag("lloa-cut-pool-full");
        }
    }

    fn build_ptdf(&mut self) -> Result<(), DispatchError> {
        let net = self.net;
        let mut row: Vec<(usize, f64)> = self.pg.iter().flatten().map(|&v| (v, 1.0)).collect();
        if let Some((up, down)) = self.shortage {
            row.push((up, 1.0));
            row.push((down, -1.0));
        }
        if let MethodConfig::Lllf { data, .. } = &self.config {
            let data = data.clone();
            let l = self.model.add_variable("loss_total", 0.0, f64::INFINITY, 0.0)?;
            self.loss = Some(l);
            row.push((l, -1.0));
            // ℓ ≥ ℓ⁰ + LFᵀ(Σpg − pd); the zero lower bound clamps negative estimates
            let mut lrow = vec![(l, 1.0)];
            for (g, v) in self.pg.iter().enumerate() {
                if let Some(v) = *v {
                    lrow.push((v, -data.lf[net.generators[g].bus]));
                }
            }
            let lf_pd: f64 = net.buses.iter().zip(&data.lf).map(|(b, a)| a * b.pd).sum();
            self.loss_row = Some(self.model.add_constraint(&lrow, Sense::Ge, data.offset - lf_pd)?);
            self.loss_constraints = 1;
        }
        self.model.add_constraint(&row, Sense::Eq, net.total_demand())?;
        Ok(())
    }

    fn add_thermal_row(&mut self, branch: usize, upper: bool) -> Result<(), DispatchError> {
        let net = self.net;
        let t = net.branches[branch].limit().expect("monitored branches are limited");
        let phi = self.sys.ptdf_row(branch);
        let mut row = Vec::new();
        for (g, v) in self.pg.iter().enumerate() {
            if let Some(v) = *v {
                row.push((v, phi[net.generators[g].bus]));
            }
        }
        let phi_pd: f64 = net.buses.iter().zip(phi).map(|(b, a)| a * b.pd).sum();
        if let (Some(l), MethodConfig::Lllf { data, .. }) = (self.loss, &self.config) {
            let phi_d: f64 = phi.iter().zip(&data.distribution).map(|(a, d)| a * d).sum();
            row.push((l, -phi_d));
        }
        if let Some(o) = self.overflow[branch] {
            row.push((o, if upper { -1.0 } else { 1.0 }));
        }
        if upper {
            self.model.add_constraint(&row, Sense::Le, t + phi_pd)?;
        } else {
            self.model.add_constraint(&row, Sense::Ge, -t + phi_pd)?;
        }
        self.monitored.insert((branch, upper));
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Direct access for wrappers that add variables and rows.
    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn pg_var(&self, generator: usize) -> Option<usize> {
        self.pg[generator]
    }

    pub fn last_result(&self) -> Option<&SolveResult> {
        self.last.as_ref()
    }

    pub fn method(&self) -> Method {
        self.config.method()
    }

    /// Number of loss rows or cones currently in the model.
    pub fn loss_constraints(&self) -> usize {
        self.loss_constraints
    }

    pub fn cut_pool(&self) -> &CutPool {
        &self.pool
    }

    pub fn trace(&self) -> &[LloaIterate] {
        &self.trace
    }

    pub(crate) fn flag(&mut self, flag: impl Into<String>) {
        let flag = flag.into();
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    fn solve_once(&mut self) -> Result<SolveResult, DispatchError> {
        let res = self.model.solve(self.last.as_ref())?;
        self.solve_time += res.stats.wall_time;
        if !res.is_optimal() {
            return Err(status_error(res.status));
        }
        self.last = Some(res.clone());
        Ok(res)
    }

    /// Solves to completion of the method's own lazy loop (thermal rows for
    /// PTDF methods, cuts for LLOA). Calling again after the model has been
    /// extended continues from the current state.
    pub fn run(&mut self) -> Result<&SolveResult, DispatchError> {
        match self.config.clone() {
            MethodConfig::Lloa {
                epsilon, max_iter, ..
            } => self.run_lloa(epsilon, max_iter)?,
            MethodConfig::Lllf { max_rounds, .. } => self.run_ptdf(max_rounds)?,
            MethodConfig::Dc(DcVariant::Ptdf) => self.run_ptdf(DEFAULT_LAZY_ROUNDS)?,
            _ => {
                self.solve_once()?;
            }
        }
        Ok(self.last.as_ref().expect("solved"))
    }

    fn run_ptdf(&mut self, max_rounds: usize) -> Result<(), DispatchError> {
        let mut rounds = 0;
        loop {
            let res = self.solve_once()?;
            let flows = self.ptdf_flows(&res);
            let mut added = false;
            for (k, br) in self.net.branches.iter().enumerate() {
                let Some(t) = br.limit().filter(|_| br.in_service) else {
                    continue;
                };
                if flows[k] > t + LAZY_TOLERANCE && !self.monitored.contains(&(k, true)) {
                    self.add_thermal_row(k, true)?;
                    added = true;
                } else if flows[k] < -t - LAZY_TOLERANCE && !self.monitored.contains(&(k, false)) {
                    self.add_thermal_row(k, false)?;
                    added = true;
                }
            }
            if !added {
                break;
            }
            rounds += 1;
            self.lazy_rounds += 1;
            if rounds > max_rounds {
                return Err(DispatchError::LazyRoundLimit(max_rounds));
            }
        }
        Ok(())
    }

    fn run_lloa(&mut self, epsilon: f64, max_iter: usize) -> Result<(), DispatchError> {
        let mut res = self.solve_once()?;
        let mut prev = res.objective;
        let mut delta = f64::INFINITY;
        self.push_trace(&res, delta);
        while delta > epsilon {
            if self.trace.len() - 1 >= max_iter {
                self.flag("lloa-max-iter");
                break;
            }
            let flows: Vec<f64> = (0..self.net.branches.len())
                .map(|k| self.p_fwd[k].map_or(0.0, |v| res.value(v)))
                .collect();
            if !self.add_point(flows) {
                self.flag("lloa-cut-pool-full");
                break;
            }
            res = self.solve_once()?;
            delta = (res.objective - prev).abs() / prev.abs();
            prev = res.objective;
            self.push_trace(&res, delta);
        }
        Ok(())
    }

    fn push_trace(&mut self, res: &SolveResult, delta: f64) {
        self.trace.push(LloaIterate {
            index: self.trace.len(),
            objective: res.objective,
            delta,
            points: self.pool.len(),
            cuts: self.loss_constraints,
            solver_iterations: res.stats.iterations,
            warm: res.stats.warm,
        });
    }

    fn bus_injections(&self, res: &SolveResult) -> Vec<f64> {
        let net = self.net;
        let mut inj: Vec<f64> = net.buses.iter().map(|b| -b.pd).collect();
        for (g, v) in self.pg.iter().enumerate() {
            if let Some(v) = *v {
                inj[net.generators[g].bus] += res.value(v);
            }
        }
        if let Some((up, down)) = self.shortage {
            inj[self.sys.slack()] += res.value(up) - res.value(down);
        }
        inj
    }

    /// Flows `Φ(p − ℓ·D)` for PTDF methods.
    fn ptdf_flows(&self, res: &SolveResult) -> Vec<f64> {
        let mut inj = self.bus_injections(res);
        if let (Some(l), MethodConfig::Lllf { data, .. }) = (self.loss, &self.config) {
            let l = res.value(l);
            for (p, d) in inj.iter_mut().zip(&data.distribution) {
                *p -= l * d;
            }
        }
        self.sys.dc_flows(&inj, true).expect("absorbed").1
    }

    /// Extracts the dispatch solution from the last solve.
    pub fn solution(&self) -> DispatchSolution {
        let res = self.last.as_ref().expect("formulation solved");
        let net = self.net;
        let pg: Vec<f64> = self.pg.iter().map(|v| v.map_or(0.0, |v| res.value(v))).collect();
        let injection = self.bus_injections(res);
        let mut flags = self.flags.clone();
        let (theta, p_fwd) = if self.config.uses_ptdf() {
            let flows = self.ptdf_flows(res);
            let mut inj = injection.clone();
            if let (Some(l), MethodConfig::Lllf { data, .. }) = (self.loss, &self.config) {
                let l = res.value(l);
                for (p, d) in inj.iter_mut().zip(&data.distribution) {
                    *p -= l * d;
                }
            }
            (self.sys.solve(&inj), flows)
        } else {
            let theta = self.theta.iter().map(|&v| res.value(v)).collect();
            let flows = self.p_fwd.iter().map(|v| v.map_or(0.0, |v| res.value(v))).collect();
            (theta, flows)
        };
        let p_bwd: Option<Vec<f64>> = self
            .has_loss_vars()
            .then(|| self.p_bwd.iter().map(|v| v.map_or(0.0, |v| res.value(v))).collect());
        let loss_est = p_bwd
            .as_ref()
            .map(|pb| p_fwd.iter().zip(pb).map(|(f, b)| f + b).collect::<Vec<f64>>());
        let loss_total = match (&loss_est, self.loss) {
            (Some(est), _) => est.iter().sum(),
            (None, Some(l)) => {
                let v = res.value(l);
                if let MethodConfig::Lllf { data, .. } = &self.config {
                    if v > data.total_loss(&injection) + LAZY_TOLERANCE {
                        flags.push("lllf-loss-clamped".into());
                    }
                    if data.uniform_distribution {
                        flags.push("lllf-uniform-distribution".into());
                    }
                }
                v
            }
            _ => 0.0,
        };
        let (balance_shortage, balance_surplus) = self
            .shortage
            .map_or((0.0, 0.0), |(u, d)| (res.value(u), res.value(d)));
        let overflow = self
            .overflow
            .iter()
            .map(|o| o.map_or(0.0, |o| res.value(o)))
            .collect();
        let iterations = match self.config {
            MethodConfig::Lloa { .. } => self.trace.len().saturating_sub(1),
            _ => self.lazy_rounds,
        };
        DispatchSolution {
            method: self.config.method(),
            pg,
            injection,
            p_fwd,
            p_bwd,
            loss_est,
            loss_true: estimate_true(net, &self.flows_for_truth(res)),
            loss_total,
            theta,
            objective: res.objective,
            iterations,
            loss_constraints: self.loss_constraints,
            balance_shortage,
            balance_surplus,
            overflow,
            flags,
            solve_time: self.solve_time,
        }
    }

    fn flows_for_truth(&self, res: &SolveResult) -> Vec<f64> {
        if self.config.uses_ptdf() {
            self.ptdf_flows(res)
        } else {
            self.p_fwd.iter().map(|v| v.map_or(0.0, |v| res.value(v))).collect()
        }
    }
}

fn estimate_true(net: &PowerNetwork, flows: &[f64]) -> Vec<f64> {
    net.branches
        .iter()
        .zip(flows)
        .map(|(b, f)| if b.in_service { b.r * f * f } else { 0.0 })
        .collect()
}

pub(crate) const DEFAULT_LAZY_ROUNDS: usize = 50;
