//! Formulation-agnostic LP/SOCP model building and solving.
//!
//! A [`Model`] collects bounded variables, sparse linear rows and rotated
//! quadratic constraints `L(x) ≥ r·x_q²`. Rows may be added after a solve;
//! passing the previous [`SolveResult`] to [`Model::solve`] re-solves from the
//! retained simplex basis when the backend supports it.
//!
//! Dual values are reported as `∂Z/∂rhs` for every linear row, whatever the
//! backend's native convention.

mod clarabel_backend;
mod highs_backend;
mod lp_file;

use std::ops::Range;
use std::time::Duration;
use thiserror::Error;

pub use lp_file::write_lp;

/// Primal and dual feasibility tolerance passed to both backends.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;
/// Relative and absolute duality-gap tolerance for the conic backend.
pub const GAP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// HiGHS for pure LPs, Clarabel as soon as a conic row is present.
    #[default]
    Auto,
    /// HiGHS dual simplex. LP only; supports warm re-solves.
    Highs,
    /// Clarabel interior point. LP and SOCP; always cold.
    Clarabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterationLimit => "iteration-limit",
            Status::NumericFailure => "numeric-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    ReversedBounds { name: String, lower: f64, upper: f64 },
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("negative quadratic scale {0}")]
    NegativeScale(f64),
    #[error("backend {0:?} does not support conic constraints")]
    Capability(Backend),
    #[error("backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> Self {
        VarSpec {
            name: name.into(),
            lower,
            upper,
            cost,
        }
    }

    pub fn free(name: impl Into<String>) -> Self {
        Self::new(name, f64::NEG_INFINITY, f64::INFINITY, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `Σ coeffs·x ≥ scale·x_q²`
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RotatedQuad {
    pub quad_var: usize,
    pub linear: Vec<(usize, f64)>,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConeId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    /// Simplex iterations (HiGHS) or interior-point iterations (Clarabel).
    pub iterations: u64,
    pub wall_time: Duration,
    /// Whether the solve started from a retained basis.
    pub warm: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    /// `∂Z/∂rhs` per linear row; empty unless optimal.
    pub duals: Vec<f64>,
    /// Includes the model's constant offset; NaN unless optimal.
    pub objective: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Primal value of a variable. Panics when the result carries no primal.
    pub fn value(&self, var: usize) -> f64 {
        self.primal.as_ref().expect("optimal solution")[var]
    }

    pub fn dual(&self, row: RowId) -> f64 {
        self.duals[row.0]
    }

    fn without_solution(status: Status, stats: SolveStats) -> Self {
        SolveResult {
            status,
            primal: None,
            duals: Vec::new(),
            objective: f64::NAN,
            stats,
        }
    }
}

/// Single-owner optimization model (minimization).
#[derive(Default)]
pub struct Model {
    backend: Backend,
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    offset: f64,
    rows: Vec<LinearRow>,
    cones: Vec<RotatedQuad>,
    trivially_infeasible: bool,
    highs: Option<highs_backend::HighsState>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("backend", &self.backend)
            .field("vars", &self.names.len())
            .field("rows", &self.rows.len())
            .field("cones", &self.cones.len())
            .finish()
    }
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_backend(backend: Backend) -> Self {
        Model {
            backend,
            ..Self::default()
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cones(&self) -> usize {
        self.cones.len()
    }

    pub fn var_name(&self, var: usize) -> &str {
        &self.names[var]
    }

    /// Linear search; intended for tests and diagnostics.
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn cost(&self, var: usize) -> f64 {
        self.cost[var]
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> Result<usize, SolverError> {
        let name = name.into();
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(SolverError::ReversedBounds { name, lower, upper });
        }
        self.names.push(name);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        Ok(self.names.len() - 1)
    }

    /// Appends variables in order; the returned range is contiguous.
    /// Nothing is added if any spec is rejected.
    pub fn add_variables(&mut self, specs: &[VarSpec]) -> Result<Range<usize>, SolverError> {
        if let Some(bad) = specs.iter().find(|s| !(s.lower <= s.upper)) {
            return Err(SolverError::ReversedBounds {
                name: bad.name.clone(),
                lower: bad.lower,
                upper: bad.upper,
            });
        }
        let start = self.names.len();
        for s in specs {
            self.add_variable(s.name.clone(), s.lower, s.upper, s.cost)?;
        }
        Ok(start..self.names.len())
    }

    /// Constant added to the reported objective.
    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn add_constraint(
        &mut self,
        coeffs: &[(usize, f64)],
        sense: Sense,
        rhs: f64,
    ) -> Result<RowId, SolverError> {
        let coeffs = self.normalize(coeffs)?;
        if coeffs.is_empty() {
            let ok = match sense {
                Sense::Le => 0.0 <= rhs,
                Sense::Eq => rhs == 0.0,
                Sense::Ge => 0.0 >= rhs,
            };
            if !ok {
                self.trivially_infeasible = true;
            }
        }
        self.rows.push(LinearRow { coeffs, sense, rhs });
        Ok(RowId(self.rows.len() - 1))
    }

    /// Adds `Σ linear ≥ scale·x_q²`. With `scale == 0` this is the linear
    /// row `Σ linear ≥ 0`, still counted as a conic constraint.
    pub fn add_rotated_quadratic(
        &mut self,
        quad_var: usize,
        linear: &[(usize, f64)],
        scale: f64,
    ) -> Result<ConeId, SolverError> {
        if quad_var >= self.n_vars() {
            return Err(SolverError::UnknownVariable(quad_var));
        }
        if !(scale >= 0.0) {
            return Err(SolverError::NegativeScale(scale));
        }
        if self.backend == Backend::Highs {
            return Err(SolverError::Capability(Backend::Highs));
        }
        let linear = self.normalize(linear)?;
        self.cones.push(RotatedQuad {
            quad_var,
            linear,
            scale,
        });
        Ok(ConeId(self.cones.len() - 1))
    }

    /// True once a row with no variables and an unsatisfiable right-hand side
    /// has been added.
    pub fn is_trivially_infeasible(&self) -> bool {
        self.trivially_infeasible
    }

    fn normalize(&self, coeffs: &[(usize, f64)]) -> Result<Vec<(usize, f64)>, SolverError> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(v, a) in coeffs {
            if v >= self.n_vars() {
                return Err(SolverError::UnknownVariable(v));
            }
            out.push((v, a));
        }
        out.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for (v, a) in out {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        Ok(merged)
    }

    fn effective_backend(&self) -> Backend {
        match self.backend {
            Backend::Auto if self.cones.is_empty() => Backend::Highs,
            Backend::Auto => Backend::Clarabel,
            b => b,
        }
    }

    /// Solves the model. With `warm = Some(previous)` and the HiGHS backend,
    /// the retained engine is extended with rows and columns added since the
    /// last solve and re-optimized from its basis; otherwise the model is
    /// rebuilt from scratch.
    pub fn solve(&mut self, warm: Option<&SolveResult>) -> Result<SolveResult, SolverError> {
        if self.trivially_infeasible {
            return Ok(SolveResult::without_solution(
                Status::Infeasible,
                SolveStats::default(),
            ));
        }
        let mut result = match self.effective_backend() {
            Backend::Clarabel => clarabel_backend::solve(self)?,
            _ => {
                if warm.is_none() {
                    self.highs = None;
                }
                highs_backend::solve(self)?
            }
        };
        if result.is_optimal() {
            result.objective += self.offset;
        }
        Ok(result)
    }

    /// Objective `cᵀx + offset` evaluated at an arbitrary point.
    pub fn evaluate_objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Largest violation of any bound, linear row or conic row at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[k] - v).max(v - self.upper[k]);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(v, a)| a * x[v]).sum();
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for c in &self.cones {
            let lhs: f64 = c.linear.iter().map(|&(v, a)| a * x[v]).sum();
            worst = worst.max(c.scale * x[c.quad_var].powi(2) - lhs);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both() -> [Backend; 2] {
        [Backend::Highs, Backend::Clarabel]
    }

    #[test]
    fn bounded_single_variable() {
        for b in both() {
            let mut m = Model::with_backend(b);
            let p = m.add_variable("p", f64::NEG_INFINITY, f64::INFINITY, 1.0).unwrap();
            let lo = m.add_constraint(&[(p, 1.0)], Sense::Ge, 1.0).unwrap();
            m.add_constraint(&[(p, 1.0)], Sense::Le, 2.0).unwrap();
            let r = m.solve(None).unwrap();
            assert_eq!(r.status, Status::Optimal, "{b:?}");
            assert!((r.value(p) - 1.0).abs() < 1e-7);
            assert!((r.objective - 1.0).abs() < 1e-7);
            assert!((r.dual(lo) - 1.0).abs() < 1e-6, "{b:?} dual {}", r.dual(lo));
        }
    }

    #[test]
    fn dual_signs_le_and_eq() {
        for b in both() {
            // max p (as min −p) with p ≤ 3 and p − q = 0, q free
            let mut m = Model::with_backend(b);
            let p = m.add_variable("p", 0.0, 10.0, -1.0).unwrap();
            let q = m.add_variable("q", f64::NEG_INFINITY, f64::INFINITY, 0.0).unwrap();
            let cap = m.add_constraint(&[(q, 1.0)], Sense::Le, 3.0).unwrap();
            let link = m.add_constraint(&[(p, 1.0), (q, -1.0)], Sense::Eq, 0.5).unwrap();
            let r = m.solve(None).unwrap();
            assert!((r.objective + 3.5).abs() < 1e-7, "{b:?}");
            assert!((r.dual(cap) + 1.0).abs() < 1e-6, "{b:?}");
            assert!((r.dual(link) + 1.0).abs() < 1e-6, "{b:?}");
        }
    }

    #[test]
    fn infeasible_bounds() {
        for b in both() {
            let mut m = Model::with_backend(b);
            let p = m.add_variable("p", 0.0, 5.0, 1.0).unwrap();
            m.add_constraint(&[(p, 1.0)], Sense::Ge, 2.0).unwrap();
            m.add_constraint(&[(p, 1.0)], Sense::Le, 1.0).unwrap();
            let r = m.solve(None).unwrap();
            assert_eq!(r.status, Status::Infeasible, "{b:?}");
            assert!(r.primal.is_none());
            assert!(r.objective.is_nan());
        }
    }

    #[test]
    fn unbounded_detected() {
        let mut m = Model::with_backend(Backend::Highs);
        m.add_variable("p", f64::NEG_INFINITY, 0.0, 1.0).unwrap();
        let r = m.solve(None).unwrap();
        assert_eq!(r.status, Status::Unbounded);
    }

    #[test]
    fn reversed_bounds_rejected() {
        let mut m = Model::new();
        let err = m
            .add_variables(&[VarSpec::new("a", 0.0, 1.0, 0.0), VarSpec::new("b", 2.0, 1.0, 0.0)])
            .unwrap_err();
        assert!(matches!(err, SolverError::ReversedBounds { .. }));
        assert_eq!(m.n_vars(), 0);
    }

    #[test]
    fn contiguous_ranges_and_free_vars() {
        let mut m = Model::new();
        let a = m.add_variables(&[VarSpec::new("p1", 0.0, 2.0, 10.0)]).unwrap();
        assert_eq!(a, 0..1);
        let specs: Vec<VarSpec> = (0..100).map(|k| VarSpec::free(format!("f{k}"))).collect();
        let r = m.add_variables(&specs).unwrap();
        assert_eq!(r, 1..101);
        assert_eq!(m.bounds(50), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn unknown_variable_rejected() {
        let mut m = Model::new();
        m.add_variable("p", 0.0, 1.0, 0.0).unwrap();
        assert_eq!(
            m.add_constraint(&[(3, 1.0)], Sense::Le, 1.0),
            Err(SolverError::UnknownVariable(3))
        );
    }

    #[test]
    fn empty_row_flags_trivial_infeasibility() {
        let mut m = Model::new();
        m.add_variable("p", 0.0, 1.0, 0.0).unwrap();
        m.add_constraint(&[], Sense::Ge, 0.5).unwrap();
        assert!(m.is_trivially_infeasible());
        assert_eq!(m.solve(None).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn duplicate_rows_are_accepted() {
        let mut m = Model::new();
        let p = m.add_variable("p", 0.0, 4.0, 1.0).unwrap();
        let r1 = m.add_constraint(&[(p, 1.0)], Sense::Ge, 1.0).unwrap();
        let r2 = m.add_constraint(&[(p, 1.0)], Sense::Ge, 1.0).unwrap();
        assert_ne!(r1, r2);
        let r = m.solve(None).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-9);
        assert!((r.dual(r1) + r.dual(r2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capability_error_on_highs() {
        let mut m = Model::with_backend(Backend::Highs);
        let x = m.add_variable("x", -1.0, 1.0, 0.0).unwrap();
        assert_eq!(
            m.add_rotated_quadratic(x, &[(x, 1.0)], 1.0),
            Err(SolverError::Capability(Backend::Highs))
        );
    }

    #[test]
    fn rotated_quadratic_binds() {
        // min pb  s.t. pf = 1, pf + pb ≥ 0.01 pf²
        let mut m = Model::new();
        let pf = m.add_variable("pf", 1.0, 1.0, 0.0).unwrap();
        let pb = m.add_variable("pb", -5.0, 5.0, 1.0).unwrap();
        m.add_rotated_quadratic(pf, &[(pf, 1.0), (pb, 1.0)], 0.01).unwrap();
        let r = m.solve(None).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.value(pb) + 0.99).abs() < 1e-7);
        assert!(m.max_violation(&[1.0, 0.01 - 1.0]) <= 1e-12);
        assert!((m.max_violation(&[1.0, -1.0]) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_cone_is_linear() {
        let mut m = Model::new();
        let pf = m.add_variable("pf", 2.0, 2.0, 0.0).unwrap();
        let pb = m.add_variable("pb", -5.0, 5.0, 1.0).unwrap();
        m.add_rotated_quadratic(pf, &[(pf, 1.0), (pb, 1.0)], 0.0).unwrap();
        let r = m.solve(None).unwrap();
        assert!((r.value(pb) + 2.0).abs() < 1e-7);
    }

    #[test]
    fn warm_resolve_after_cut() {
        let mut m = Model::with_backend(Backend::Highs);
        let x = m.add_variable("x", 0.0, 10.0, -1.0).unwrap();
        let y = m.add_variable("y", 0.0, 10.0, -1.0).unwrap();
        m.add_constraint(&[(x, 1.0), (y, 2.0)], Sense::Le, 8.0).unwrap();
        let first = m.solve(None).unwrap();
        m.add_constraint(&[(x, 2.0), (y, 1.0)], Sense::Le, 9.0).unwrap();
        let s = m.add_variable("s", 0.0, 1.0, 0.5).unwrap();
        m.add_constraint(&[(x, 1.0), (s, -1.0)], Sense::Le, 3.0).unwrap();
        let warm = m.solve(Some(&first)).unwrap();
        assert!(warm.stats.warm);
        assert!(warm.objective >= first.objective - 1e-9);
        let cold = m.solve(None).unwrap();
        assert!(!cold.stats.warm);
        assert!((warm.objective - cold.objective).abs() < 1e-9);
        assert_eq!(warm.primal.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn offset_is_reported() {
        let mut m = Model::new();
        let p = m.add_variable("p", 1.0, 2.0, 3.0).unwrap();
        m.set_objective_offset(5.0);
        let r = m.solve(None).unwrap();
        assert!((r.objective - 8.0).abs() < 1e-9);
        assert!((m.evaluate_objective(&[r.value(p)]) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_repeat() {
        let build = || {
            let mut m = Model::new();
            let v: Vec<usize> = (0..5)
                .map(|k| m.add_variable(format!("x{k}"), 0.0, 3.0, (k as f64) - 2.0).unwrap())
                .collect();
            let row: Vec<(usize, f64)> = v.iter().map(|&i| (i, 1.0)).collect();
            m.add_constraint(&row, Sense::Le, 4.0).unwrap();
            m
        };
        let a = build().solve(None).unwrap();
        let b = build().solve(None).unwrap();
        assert_eq!(a.status, b.status);
        assert!((a.objective - b.objective).abs() < 1e-9);
    }
}
