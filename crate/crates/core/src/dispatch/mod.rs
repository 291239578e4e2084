//! Dispatch formulations: lossless DC, LLLF, LLQCP and LLOA.
//!
//! Every method shares the generator model (piecewise-linear costs with
//! [`DEFAULT_COST_SEGMENTS`](crate::network::DEFAULT_COST_SEGMENTS)
//! segments), so objectives are directly comparable. Angle-based methods
//! (DC-angle, LLQCP, LLOA) carry per-branch flow variables; PTDF methods
//! (DC-PTDF, LLLF) carry only generator outputs and add thermal rows lazily.

mod cuts;
mod formulation;
mod loss_factors;

pub use cuts::{lloa_cut, static_oa_error_bound, static_points, CutPool, LossCut};
pub use formulation::{Formulation, SoftConstraints};
pub use loss_factors::{compute_loss_factors, quadratic_losses, LossFactorData};

use crate::kernel::SusceptanceSystem;
use crate::network::PowerNetwork;
use crate::solver::SolverError;
use formulation::{MethodConfig, DEFAULT_LAZY_ROUNDS};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::time::Duration;
use thiserror::Error;

/// LLOA relative termination tolerance.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// LLOA iteration cap; the cut pool holds at most this many points per branch.
pub const DEFAULT_MAX_ITER: usize = 50;
/// Tangents per branch in the static outer approximation of LLQCP.
pub const DEFAULT_TANGENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dc,
    Lllf,
    Llqcp,
    Lloa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dc, Method::Lllf, Method::Llqcp, Method::Lloa];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dc => "dc",
            Method::Lllf => "lllf",
            Method::Llqcp => "llqcp",
            Method::Lloa => "lloa",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Method::Dc),
            "lllf" => Ok(Method::Lllf),
            "llqcp" => Ok(Method::Llqcp),
            "lloa" => Ok(Method::Lloa),
            other => Err(format!("unknown method {other:?} (expected dc, lllf, llqcp or lloa)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DcVariant {
    #[default]
    Angle,
    Ptdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcpBackend {
    /// Second-order cone constraints solved by the interior-point backend.
    Conic,
    /// LP with `tangents` fixed cuts per branch spanning `[−T, T]`.
    StaticOa { tangents: usize },
}

impl Default for QcpBackend {
    fn default() -> Self {
        QcpBackend::Conic
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("dispatch problem is infeasible")]
    Infeasible,
    #[error("dispatch problem is unbounded")]
    Unbounded,
    #[error("solver reported {0}")]
    Numeric(String),
    #[error("lazy constraint loop did not settle within {0} rounds")]
    LazyRoundLimit(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// One LLOA solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LloaIterate {
    pub index: usize,
    pub objective: f64,
    /// Relative objective change against the previous solve; infinite for
    /// the first.
    pub delta: f64,
    /// Linearization points in the pool at this solve.
    pub points: usize,
    /// Loss cuts in the model at this solve.
    pub cuts: usize,
    pub solver_iterations: u64,
    pub warm: bool,
}

/// Result of any dispatch formulation. Per-branch vectors are indexed by
/// network branch; out-of-service branches hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    pub method: Method,
    /// Per-generator output (pu); out-of-service units hold 0.
    pub pg: Vec<f64>,
    /// Per-bus net injection `Σpg − pd` (including any balance slack at the
    /// slack bus).
    pub injection: Vec<f64>,
    /// From→to flow. For LLLF these are `Φ(p − ℓ·D)`.
    pub p_fwd: Vec<f64>,
    /// Flow leaving the to-bus into the branch (loss methods only).
    pub p_bwd: Option<Vec<f64>>,
    /// `p_fwd + p_bwd` per branch (loss methods only).
    pub loss_est: Option<Vec<f64>>,
    /// `r·p_fwd²` per branch.
    pub loss_true: Vec<f64>,
    /// Total estimated losses; 0 for lossless DC.
    pub loss_total: f64,
    pub theta: Vec<f64>,
    pub objective: f64,
    /// LLOA: index of the final solve. Other methods: lazy thermal rounds.
    pub iterations: usize,
    /// Loss rows or cones in the final model.
    pub loss_constraints: usize,
    pub balance_shortage: f64,
    pub balance_surplus: f64,
    /// Per-branch thermal overflow (soft transmission only).
    pub overflow: Vec<f64>,
    pub flags: Vec<String>,
    /// Solver time, excluding model construction and PTDF computation.
    pub solve_time: Duration,
}

#[derive(Serialize)]
struct BranchRecord {
    index: usize,
    p_fwd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_bwd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_est: Option<f64>,
    loss_true: f64,
}

#[derive(Serialize)]
struct SolutionRecord<'a> {
    method: Method,
    objective: f64,
    iterations: usize,
    pg: &'a [f64],
    branches: Vec<BranchRecord>,
    loss_total: f64,
    loss_true_total: f64,
    flags: &'a [String],
    timing: f64,
}

impl DispatchSolution {
    pub fn total_true_losses(&self) -> f64 {
        self.loss_true.iter().sum()
    }

    pub(crate) fn json_value(&self) -> serde_json::Value {
        let branches = (0..self.p_fwd.len())
            .map(|k| BranchRecord {
                index: k,
                p_fwd: self.p_fwd[k],
                p_bwd: self.p_bwd.as_ref().map(|v| v[k]),
                loss_est: self.loss_est.as_ref().map(|v| v[k]),
                loss_true: self.loss_true[k],
            })
            .collect();
        serde_json::to_value(SolutionRecord {
            method: self.method,
            objective: self.objective,
            iterations: self.iterations,
            pg: &self.pg,
            branches,
            loss_total: self.loss_total,
            loss_true_total: self.total_true_losses(),
            flags: &self.flags,
            timing: self.solve_time.as_secs_f64(),
        })
        .expect("solution serializes")
    }

    /// Solution JSON: method, objective, iterations, per-generator pg,
    /// per-branch flows and losses, totals and timing.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.json_value()).expect("solution serializes")
    }

    /// Reads the `pg` vector and method back from [`to_json`](Self::to_json)
    /// output. Other fields are not needed for restoration.
    pub fn dispatch_from_json(text: &str) -> Result<(Method, Vec<f64>), String> {
        #[derive(Deserialize)]
        struct Minimal {
            method: Method,
            pg: Vec<f64>,
        }
        let m: Minimal = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Ok((m.method, m.pg))
    }
}

/// Per-branch `r·p_fwd²` and its sum.
pub fn estimate_true_losses(sol: &DispatchSolution, net: &PowerNetwork) -> (Vec<f64>, f64) {
    let per: Vec<f64> = net
        .branches
        .iter()
        .zip(&sol.p_fwd)
        .map(|(b, f)| if b.in_service { b.r * f * f } else { 0.0 })
        .collect();
    let total = per.iter().sum();
    (per, total)
}

/// Lossless economic dispatch.
pub fn solve_vanilla_dc(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    variant: DcVariant,
) -> Result<DispatchSolution, DispatchError> {
    let mut f = Formulation::build(net, sys, MethodConfig::Dc(variant), SoftConstraints::default())?;
    f.run()?;
    Ok(f.solution())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LllfOptions {
    pub max_rounds: usize,
}

impl Default for LllfOptions {
    fn default() -> Self {
        LllfOptions {
            max_rounds: DEFAULT_LAZY_ROUNDS,
        }
    }
}

/// Loss factors at the lossless DC dispatch.
pub fn reference_loss_factors(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
) -> Result<LossFactorData, DispatchError> {
    let dc = solve_vanilla_dc(net, sys, DcVariant::Ptdf)?;
    Ok(compute_loss_factors(net, sys, &dc.injection))
}

pub fn solve_lllf(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    lf: &LossFactorData,
    opts: &LllfOptions,
) -> Result<DispatchSolution, DispatchError> {
    let config = MethodConfig::Lllf {
        data: lf.clone(),
        max_rounds: opts.max_rounds,
    };
    let mut f = Formulation::build(net, sys, config, SoftConstraints::default())?;
    f.run()?;
    Ok(f.solution())
}

pub fn solve_llqcp(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    backend: QcpBackend,
) -> Result<DispatchSolution, DispatchError> {
    let mut f = Formulation::build(net, sys, MethodConfig::Llqcp(backend), SoftConstraints::default())?;
    f.run()?;
    Ok(f.solution())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloaOptions {
    pub epsilon: f64,
    /// Seed the pool with lossless DC flows; otherwise with the zero-flow point.
    pub warm_start: bool,
    /// Explicit initial points; overrides `warm_start` when non-empty.
    pub seed_points: Vec<Vec<f64>>,
    pub max_iter: usize,
}

impl Default for LloaOptions {
    fn default() -> Self {
        LloaOptions {
            epsilon: DEFAULT_EPSILON,
            warm_start: true,
            seed_points: Vec::new(),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LloaRun {
    pub solution: DispatchSolution,
    pub trace: Vec<LloaIterate>,
    pub points: usize,
}

pub(crate) fn lloa_config(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    opts: &LloaOptions,
) -> Result<(MethodConfig, Vec<Vec<f64>>), DispatchError> {
    if !(opts.epsilon > 0.0) {
        return Err(DispatchError::Numeric(format!(
            "epsilon must be positive, got {}",
            opts.epsilon
        )));
    }
    let mut seeds = opts.seed_points.clone();
    if seeds.is_empty() {
        seeds.push(if opts.warm_start {
            solve_vanilla_dc(net, sys, DcVariant::Angle)?.p_fwd
        } else {
            vec![0.0; net.branches.len()]
        });
    }
    let first = seeds.remove(0);
    let config = MethodConfig::Lloa {
        epsilon: opts.epsilon,
        seed: first,
        max_iter: opts.max_iter.max(seeds.len() + 1),
    };
    Ok((config, seeds))
}

pub fn solve_lloa(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    opts: &LloaOptions,
) -> Result<LloaRun, DispatchError> {
    let (config, extra) = lloa_config(net, sys, opts)?;
    let mut f = Formulation::build(net, sys, config, SoftConstraints::default())?;
    for p in extra {
        f.add_seed_point(p);
    }
    f.run()?;
    Ok(LloaRun {
        solution: f.solution(),
        trace: f.trace().to_vec(),
        points: f.cut_pool().len(),
    })
}

/// Options for [`solve`], covering every method.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOptions {
    pub method: Method,
    pub dc_variant: DcVariant,
    pub qcp_backend: QcpBackend,
    pub lloa: LloaOptions,
    pub lllf: LllfOptions,
    /// Precomputed loss factors for LLLF; computed from the lossless DC
    /// dispatch when absent.
    pub loss_factors: Option<LossFactorData>,
}

impl DispatchOptions {
    pub fn new(method: Method) -> Self {
        DispatchOptions {
            method,
            dc_variant: DcVariant::default(),
            qcp_backend: QcpBackend::default(),
            lloa: LloaOptions::default(),
            lllf: LllfOptions::default(),
            loss_factors: None,
        }
    }
}

/// Builds (without solving) the formulation for `opts.method`.
pub fn formulate<'a>(
    net: &'a PowerNetwork,
    sys: &'a SusceptanceSystem,
    opts: &DispatchOptions,
    soft: SoftConstraints,
) -> Result<Formulation<'a>, DispatchError> {
    match opts.method {
        Method::Dc => Formulation::build(net, sys, MethodConfig::Dc(opts.dc_variant), soft),
        Method::Lllf => {
            let data = match &opts.loss_factors {
                Some(d) => d.clone(),
                None => reference_loss_factors(net, sys)?,
            };
            let config = MethodConfig::Lllf {
                data,
                max_rounds: opts.lllf.max_rounds,
            };
            Formulation::build(net, sys, config, soft)
        }
        Method::Llqcp => Formulation::build(net, sys, MethodConfig::Llqcp(opts.qcp_backend), soft),
        Method::Lloa => {
            let (config, extra) = lloa_config(net, sys, &opts.lloa)?;
            let mut f = Formulation::build(net, sys, config, soft)?;
            for p in extra {
                f.add_seed_point(p);
            }
            Ok(f)
        }
    }
}

/// Builds and solves any method with hard constraints.
pub fn solve(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    opts: &DispatchOptions,
) -> Result<DispatchSolution, DispatchError> {
    let mut f = formulate(net, sys, opts, SoftConstraints::default())?;
    f.run()?;
    Ok(f.solution())
}
