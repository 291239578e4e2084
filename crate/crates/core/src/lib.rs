//! Line-loss modelling for DC optimal power flow and economic dispatch.
//!
//! The crate builds and solves four dispatch formulations over a per-unit
//! network model: lossless DC, linearized loss factors (LLLF), the convex
//! quadratic loss model (LLQCP) and its lazy linear outer approximation
//! (LLOA). Dispatches can be wrapped in a reserve-constrained SCED, restored
//! to an AC operating point with Newton–Raphson, and compared across
//! load-perturbation sweeps.
//!
//! ```no_run
//! use lineloss::{cases, dispatch};
//!
//! let net = cases::bundled("case14").unwrap();
//! let sys = lineloss::kernel::SusceptanceSystem::new(&net).unwrap();
//! let run = dispatch::solve_lloa(&net, &sys, &dispatch::LloaOptions::default()).unwrap();
//! println!("{} after {} iterations", run.solution.objective, run.solution.iterations);
//! ```

pub mod acpf;
pub mod cases;
pub mod dispatch;
pub mod experiments;
pub mod kernel;
pub mod network;
pub mod sced;
pub mod solver;

use thiserror::Error;

/// Top-level error used by the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] network::CaseError),
    #[error(transparent)]
    Kernel(#[from] kernel::KernelError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Dispatch(#[from] dispatch::DispatchError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 infeasible, 3 numeric or backend failure, 4 input errors.
    pub fn exit_code(&self) -> i32 {
        use dispatch::DispatchError as D;
        match self {
            Error::Dispatch(D::Infeasible) => 2,
            Error::Dispatch(D::Unbounded | D::Numeric(_) | D::LazyRoundLimit(_)) => 3,
            Error::Dispatch(D::Solver(solver::SolverError::Backend(_))) => 3,
            Error::Dispatch(D::Solver(_)) => 4,
            Error::Solver(solver::SolverError::Backend(_)) => 3,
            _ => 4,
        }
    }
}
