use super::{Model, Sense, SolveResult, SolveStats, SolverError, Status, FEASIBILITY_TOLERANCE, GAP_TOLERANCE};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use std::time::Instant;

/// Row orientation of a linear constraint in `Ax + s = b` form.
#[derive(Clone, Copy)]
enum Orient {
    Plain,
    Negated,
}

struct Assembly {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    next: usize,
}

impl Assembly {
    fn push_row(&mut self, coeffs: &[(usize, f64)], sign: f64, rhs: f64) {
        for &(v, a) in coeffs {
            self.rows.push(self.next);
            self.cols.push(v);
            self.vals.push(sign * a);
        }
        self.b.push(rhs);
        self.next += 1;
    }

    fn cone(&mut self, cone: SupportedConeT<f64>) {
        match (self.cones.last_mut(), &cone) {
            (Some(SupportedConeT::ZeroConeT(n)), SupportedConeT::ZeroConeT(m)) => *n += m,
            (Some(SupportedConeT::NonnegativeConeT(n)), SupportedConeT::NonnegativeConeT(m)) => {
                *n += m
            }
            _ => self.cones.push(cone),
        }
    }
}

pub(crate) fn solve(model: &Model) -> Result<SolveResult, SolverError> {
    let n = model.n_vars();
    let mut asm = Assembly {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
        next: 0,
    };
    // equalities first, then inequalities (user rows, then variable bounds), then cones
    let mut slot = vec![(0usize, Orient::Plain); model.rows.len()];
    for (k, row) in model.rows.iter().enumerate() {
        if row.sense == Sense::Eq {
            slot[k] = (asm.next, Orient::Plain);
            asm.push_row(&row.coeffs, 1.0, row.rhs);
            asm.cone(SupportedConeT::ZeroConeT(1));
        }
    }
    for (k, row) in model.rows.iter().enumerate() {
        match row.sense {
            Sense::Le => {
                slot[k] = (asm.next, Orient::Plain);
                asm.push_row(&row.coeffs, 1.0, row.rhs);
            }
            Sense::Ge => {
                slot[k] = (asm.next, Orient::Negated);
                asm.push_row(&row.coeffs, -1.0, -row.rhs);
            }
            Sense::Eq => continue,
        }
        asm.cone(SupportedConeT::NonnegativeConeT(1));
    }
    for v in 0..n {
        let (lo, up) = model.bounds(v);
        if lo == up {
            asm.push_row(&[(v, 1.0)], 1.0, lo);
            asm.cone(SupportedConeT::ZeroConeT(1));
            continue;
        }
        if up.is_finite() {
            asm.push_row(&[(v, 1.0)], 1.0, up);
            asm.cone(SupportedConeT::NonnegativeConeT(1));
        }
        if lo.is_finite() {
            asm.push_row(&[(v, 1.0)], -1.0, -lo);
            asm.cone(SupportedConeT::NonnegativeConeT(1));
        }
    }
    for c in &model.cones {
        if c.scale == 0.0 {
            asm.push_row(&c.linear, -1.0, 0.0);
            asm.cone(SupportedConeT::NonnegativeConeT(1));
            continue;
        }
        // (L + 1, L − 1, 2√r·x) ∈ SOC(3)  ⇔  L ≥ r·x²
        asm.push_row(&c.linear, -1.0, 1.0);
        asm.push_row(&c.linear, -1.0, -1.0);
        asm.push_row(&[(c.quad_var, 1.0)], -2.0 * c.scale.sqrt(), 0.0);
        asm.cones.push(SupportedConeT::SecondOrderConeT(3));
    }

    let m = asm.next;
    let a = CscMatrix::new_from_triplets(m, n, asm.rows, asm.cols, asm.vals);
    let p = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(FEASIBILITY_TOLERANCE)
        .tol_gap_abs(GAP_TOLERANCE)
        .tol_gap_rel(GAP_TOLERANCE)
        .max_iter(200)
        .build()
        .map_err(|e| SolverError::Backend(e.to_string()))?;
    let start = Instant::now();
    let mut solver = DefaultSolver::new(&p, &model.cost, &a, &asm.b, &asm.cones, settings)
        .map_err(|e| SolverError::Backend(e.to_string()))?;
    solver.solve();
    let stats = SolveStats {
        iterations: solver.solution.iterations as u64,
        wall_time: start.elapsed(),
        warm: false,
    };
    let status = match solver.solution.status {
        SolverStatus::Solved => Status::Optimal,
        SolverStatus::AlmostSolved => {
            log::warn!("conic solve finished at reduced accuracy");
            Status::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::IterationLimit,
        _ => Status::NumericFailure,
    };
    if status != Status::Optimal {
        return Ok(SolveResult::without_solution(status, stats));
    }
    let z = &solver.solution.z;
    let duals = slot
        .iter()
        .map(|&(i, o)| match o {
            // KKT: c + Aᵀz = 0 with z in the dual cone, so ∂Z/∂b = −z
            Orient::Plain => -z[i],
            Orient::Negated => z[i],
        })
        .collect();
    let primal = solver.solution.x.clone();
    let objective = model.cost.iter().zip(&primal).map(|(c, v)| c * v).sum();
    Ok(SolveResult {
        status,
        primal: Some(primal),
        duals,
        objective,
        stats,
    })
}
