use super::{Model, Sense, SolveResult, SolveStats, SolverError, Status, FEASIBILITY_TOLERANCE};
use highs::{HighsModelStatus, RowProblem};
use highs_sys::HighsInt;
use std::ffi::CString;
use std::time::Instant;

/// A HiGHS instance mirroring a prefix of the model's columns and rows.
pub(crate) struct HighsState {
    engine: Option<highs::Model>,
    cols: usize,
    rows: usize,
}

impl HighsState {
    fn new() -> Self {
        let mut engine = highs::Model::new(RowProblem::default());
        engine.set_option("primal_feasibility_tolerance", FEASIBILITY_TOLERANCE);
        engine.set_option("dual_feasibility_tolerance", FEASIBILITY_TOLERANCE);
        engine.set_option("presolve", "off");
        engine.set_option("solver", "simplex");
        engine.set_option("threads", 1);
        HighsState {
            engine: Some(engine),
            cols: 0,
            rows: 0,
        }
    }
}

fn hi(n: usize) -> HighsInt {
    HighsInt::try_from(n).expect("model too large for HiGHS")
}

fn check(code: HighsInt, what: &str) -> Result<(), SolverError> {
    // kHighsStatusError = -1; warnings (1) are acceptable
    if code < 0 {
        Err(SolverError::Backend(format!("{what} failed")))
    } else {
        Ok(())
    }
}

fn sync(model: &Model, state: &mut HighsState) -> Result<(), SolverError> {
    let engine = state.engine.as_mut().expect("engine present");
    let ptr = engine.as_mut_ptr();
    let new_cols = model.n_vars() - state.cols;
    if new_cols > 0 {
        let r = state.cols..model.n_vars();
        let code = unsafe {
            highs_sys::Highs_addCols(
                ptr,
                hi(new_cols),
                model.cost[r.clone()].as_ptr(),
                model.lower[r.clone()].as_ptr(),
                model.upper[r].as_ptr(),
                0,
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null(),
            )
        };
        check(code, "Highs_addCols")?;
        state.cols = model.n_vars();
    }
    let new_rows = &model.rows[state.rows..];
    if !new_rows.is_empty() {
        let mut lower = Vec::with_capacity(new_rows.len());
        let mut upper = Vec::with_capacity(new_rows.len());
        let mut starts = Vec::with_capacity(new_rows.len());
        let mut index = Vec::new();
        let mut value = Vec::new();
        for row in new_rows {
            let (lo, up) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Eq => (row.rhs, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
            };
            lower.push(lo);
            upper.push(up);
            starts.push(hi(index.len()));
            for &(v, a) in &row.coeffs {
                index.push(hi(v));
                value.push(a);
            }
        }
        let code = unsafe {
            highs_sys::Highs_addRows(
                ptr,
                hi(new_rows.len()),
                lower.as_ptr(),
                upper.as_ptr(),
                hi(index.len()),
                starts.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
            )
        };
        check(code, "Highs_addRows")?;
        state.rows = model.rows.len();
    }
    Ok(())
}

fn int_info(ptr: *const std::ffi::c_void, name: &str) -> Option<HighsInt> {
    let key = CString::new(name).expect("info name");
    let mut value: HighsInt = 0;
    let code = unsafe { highs_sys::Highs_getIntInfoValue(ptr as *mut _, key.as_ptr(), &mut value) };
    (code == 0).then_some(value)
}

/// Optimizes a model with no rows directly from its bounds.
fn solve_bounds_only(model: &Model) -> SolveResult {
    let mut x = Vec::with_capacity(model.n_vars());
    for k in 0..model.n_vars() {
        let (lo, up, c) = (model.lower[k], model.upper[k], model.cost[k]);
        let v = if c > 0.0 {
            lo
        } else if c < 0.0 {
            up
        } else if lo.is_finite() {
            lo
        } else if up.is_finite() {
            up
        } else {
            0.0
        };
        if !v.is_finite() {
            return SolveResult::without_solution(Status::Unbounded, SolveStats::default());
        }
        x.push(v);
    }
    let objective = model.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    SolveResult {
        status: Status::Optimal,
        primal: Some(x),
        duals: Vec::new(),
        objective,
        stats: SolveStats::default(),
    }
}

pub(crate) fn solve(model: &mut Model) -> Result<SolveResult, SolverError> {
    if !model.cones.is_empty() {
        return Err(SolverError::Capability(super::Backend::Highs));
    }
    if model.rows.is_empty() {
        return Ok(solve_bounds_only(model));
    }
    let warm = model.highs.is_some();
    let mut state = model.highs.take().unwrap_or_else(HighsState::new);
    sync(model, &mut state)?;
    let engine = state.engine.take().expect("engine present");
    let start = Instant::now();
    let solved = engine
        .try_solve()
        .map_err(|e| SolverError::Backend(format!("Highs_run: {e:?}")))?;
    let wall_time = start.elapsed();
    let iterations = int_info(solved.as_ptr(), "simplex_iteration_count").unwrap_or(0).max(0) as u64;
    let stats = SolveStats {
        iterations,
        wall_time,
        warm,
    };
    let status = match solved.status() {
        HighsModelStatus::Optimal => Status::Optimal,
        HighsModelStatus::Infeasible => Status::Infeasible,
        HighsModelStatus::Unbounded => Status::Unbounded,
        HighsModelStatus::UnboundedOrInfeasible => {
            // presolve is off, so this comes from the simplex dual phase
            Status::Infeasible
        }
        HighsModelStatus::ReachedIterationLimit | HighsModelStatus::ReachedTimeLimit => {
            Status::IterationLimit
        }
        _ => Status::NumericFailure,
    };
    let result = if status == Status::Optimal {
        let sol = solved.get_solution();
        let primal = sol.columns().to_vec();
        let objective = model.cost.iter().zip(&primal).map(|(c, v)| c * v).sum();
        SolveResult {
            status,
            primal: Some(primal),
            duals: sol.dual_rows().to_vec(),
            objective,
            stats,
        }
    } else {
        SolveResult::without_solution(status, stats)
    };
    state.engine = Some(highs::Model::from(solved));
    model.highs = Some(state);
    Ok(result)
}
