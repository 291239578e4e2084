//! Incidence and susceptance structures, the factorized reduced DC
//! susceptance matrix, PTDF rows and DC flow solves.
//!
//! Sign convention: `b = 1/x > 0` and a branch flow is positive from its
//! from-bus to its to-bus, `p_ij = b_ij (θ_i − θ_j)`. Every reported flow
//! uses this orientation.

use crate::network::{validate_connectivity, PowerNetwork};
use clarabel::algebra::CscMatrix;
use clarabel::qdldl::{QDLDLFactorisation, QDLDLSettingsBuilder};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::io::Write;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

/// Networks with fewer buses than this use a dense Cholesky factor.
pub const DENSE_THRESHOLD: usize = 500;

/// Balance tolerance for [`SusceptanceSystem::dc_flows`].
pub const BALANCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("susceptance matrix is singular: network is islanded ({0} components)")]
    Islanded(usize),
    #[error("branch {0} has zero reactance")]
    ZeroReactance(usize),
    #[error("susceptance matrix is singular")]
    Singular,
    #[error("injections do not balance (sum = {0:e})")]
    Imbalanced(f64),
    #[error("slack bus index {0} out of range")]
    BadSlack(usize),
}

/// Sparse `E × N` branch-bus incidence over in-service branches, in branch
/// order: `+1` at the from-bus, `−1` at the to-bus.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    n_bus: usize,
    rows: Vec<(usize, usize)>,
    branches: Vec<usize>,
}

impl IncidenceMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_bus
    }

    /// Network branch index for each row.
    pub fn branch_of_row(&self) -> &[usize] {
        &self.branches
    }

    /// Nonzeros of one row as `(column, value)`.
    pub fn row(&self, k: usize) -> [(usize, f64); 2] {
        let (f, t) = self.rows[k];
        [(f, 1.0), (t, -1.0)]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_bus);
        for (k, &(f, t)) in self.rows.iter().enumerate() {
            m[(k, f)] = 1.0;
            m[(k, t)] = -1.0;
        }
        m
    }
}

pub fn build_incidence(net: &PowerNetwork) -> IncidenceMatrix {
    let mut rows = Vec::new();
    let mut branches = Vec::new();
    for (k, br) in net.branches.iter().enumerate() {
        if br.in_service {
            rows.push((br.from, br.to));
            branches.push(k);
        }
    }
    IncidenceMatrix {
        n_bus: net.n_buses(),
        rows,
        branches,
    }
}

/// Requested factorization kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorKind {
    /// Dense below [`DENSE_THRESHOLD`] buses, sparse otherwise.
    #[default]
    Auto,
    Dense,
    Sparse,
}

enum Factor {
    Dense(Cholesky<f64, Dyn>),
    // qdldl solves need scratch space, so concurrent callers are serialized.
    Sparse(Mutex<QDLDLFactorisation<f64>>),
}

/// Factorized reduced DC susceptance system. Immutable after construction;
/// `ptdf_row` and `dc_flows` may be called from several threads.
pub struct SusceptanceSystem {
    n_bus: usize,
    slack: usize,
    /// `(from, to, b)` per network branch; `b = 0` when out of service.
    branches: Vec<(usize, usize, f64)>,
    /// bus index → reduced index (`usize::MAX` at the slack)
    reduced_index: Vec<usize>,
    factor: Factor,
    ptdf_cache: Vec<OnceLock<Vec<f64>>>,
}

impl std::fmt::Debug for SusceptanceSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SusceptanceSystem")
            .field("n_bus", &self.n_bus)
            .field("slack", &self.slack)
            .field("sparse", &self.is_sparse())
            .finish()
    }
}

impl SusceptanceSystem {
    /// Factorizes with the network's own slack bus.
    pub fn new(net: &PowerNetwork) -> Result<Self, KernelError> {
        Self::factorize(net, net.slack(), FactorKind::Auto)
    }

    pub fn factorize(
        net: &PowerNetwork,
        slack: usize,
        kind: FactorKind,
    ) -> Result<Self, KernelError> {
        let n = net.n_buses();
        if slack >= n {
            return Err(KernelError::BadSlack(slack));
        }
        let islands = validate_connectivity(net);
        if !islands.is_empty() {
            return Err(KernelError::Islanded(islands.len()));
        }
        let mut branches = Vec::with_capacity(net.branches.len());
        for (k, br) in net.branches.iter().enumerate() {
            if !br.in_service {
                branches.push((br.from, br.to, 0.0));
                continue;
            }
            if br.x == 0.0 {
                return Err(KernelError::ZeroReactance(k));
            }
            branches.push((br.from, br.to, br.susceptance()));
        }
        let mut reduced_index = vec![usize::MAX; n];
        let mut next = 0;
        for (i, slot) in reduced_index.iter_mut().enumerate() {
            if i != slack {
                *slot = next;
                next += 1;
            }
        }
        let m = n - 1;
        let sparse = match kind {
            FactorKind::Auto => n >= DENSE_THRESHOLD,
            FactorKind::Dense => false,
            FactorKind::Sparse => true,
        };
        let factor = if m == 0 {
            Factor::Dense(Cholesky::new(DMatrix::<f64>::identity(0, 0)).ok_or(KernelError::Singular)?)
        } else if sparse {
            Factor::Sparse(Mutex::new(sparse_factor(&branches, &reduced_index, m)?))
        } else {
            let dense = assemble_dense(&branches, &reduced_index, m);
            Factor::Dense(Cholesky::new(dense).ok_or(KernelError::Singular)?)
        };
        Ok(SusceptanceSystem {
            n_bus: n,
            slack,
            branches,
            reduced_index,
            factor,
            ptdf_cache: (0..net.branches.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn n_buses(&self) -> usize {
        self.n_bus
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.factor, Factor::Sparse(_))
    }

    /// Series susceptance `b = 1/x` per branch (0 when out of service).
    pub fn susceptance(&self, branch: usize) -> f64 {
        self.branches[branch].2
    }

    /// Dense copy of the reduced matrix `Aᵀ B A` with the slack row and
    /// column removed, in bus order.
    pub fn reduced_matrix(&self) -> DMatrix<f64> {
        assemble_dense(&self.branches, &self.reduced_index, self.n_bus - 1)
    }

    /// Solves `B_red x = rhs` where `rhs` is indexed by bus; the slack entry
    /// is ignored and returned as 0.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n_bus);
        let mut reduced: Vec<f64> = (0..self.n_bus)
            .filter(|&i| i != self.slack)
            .map(|i| rhs[i])
            .collect();
        match &self.factor {
            Factor::Dense(ch) => {
                let v = ch.solve(&DVector::from_vec(reduced));
                reduced = v.as_slice().to_vec();
            }
            Factor::Sparse(f) => {
                f.lock().expect("factor lock").solve(&mut reduced);
            }
        }
        let mut out = vec![0.0; self.n_bus];
        for (i, &r) in self.reduced_index.iter().enumerate() {
            if r != usize::MAX {
                out[i] = reduced[r];
            }
        }
        out
    }

    /// Row `branch` of the PTDF matrix (length N, slack entry 0). Computed
    /// with one backsolve on first request and cached.
    pub fn ptdf_row(&self, branch: usize) -> &[f64] {
        self.ptdf_cache[branch].get_or_init(|| {
            let (f, t, b) = self.branches[branch];
            if b == 0.0 {
                return vec![0.0; self.n_bus];
            }
            let mut rhs = vec![0.0; self.n_bus];
            rhs[f] += 1.0;
            rhs[t] -= 1.0;
            // B_red is symmetric, so row (e_f − e_t)ᵀ B_red⁻¹ is a single solve
            self.solve(&rhs).into_iter().map(|v| b * v).collect()
        })
    }

    /// Angles and branch flows for the given bus injections.
    ///
    /// With `absorb_imbalance`, any mismatch is taken up by the slack bus;
    /// otherwise injections must sum to zero within [`BALANCE_TOLERANCE`].
    pub fn dc_flows(
        &self,
        injections: &[f64],
        absorb_imbalance: bool,
    ) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
        let total: f64 = injections.iter().sum();
        if !absorb_imbalance && total.abs() > BALANCE_TOLERANCE {
            return Err(KernelError::Imbalanced(total));
        }
        let theta = self.solve(injections);
        let flows = self.flows_from_angles(&theta);
        Ok((theta, flows))
    }

    /// `b (θ_from − θ_to)` per branch.
    pub fn flows_from_angles(&self, theta: &[f64]) -> Vec<f64> {
        self.branches
            .iter()
            .map(|&(f, t, b)| b * (theta[f] - theta[t]))
            .collect()
    }

    /// Writes the PTDF rows of every branch as CSV (one row per branch,
    /// one column per bus).
    pub fn write_ptdf_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for k in 0..self.branches.len() {
            let row = self.ptdf_row(k);
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn assemble_dense(branches: &[(usize, usize, f64)], index: &[usize], m: usize) -> DMatrix<f64> {
    let mut b_red = DMatrix::zeros(m, m);
    for &(f, t, b) in branches {
        if b == 0.0 {
            continue;
        }
        let (rf, rt) = (index[f], index[t]);
        if rf != usize::MAX {
            b_red[(rf, rf)] += b;
        }
        if rt != usize::MAX {
            b_red[(rt, rt)] += b;
        }
        if rf != usize::MAX && rt != usize::MAX {
            b_red[(rf, rt)] -= b;
            b_red[(rt, rf)] -= b;
        }
    }
    b_red
}

fn sparse_factor(
    branches: &[(usize, usize, f64)],
    index: &[usize],
    m: usize,
) -> Result<QDLDLFactorisation<f64>, KernelError> {
    // upper triangle in CSC form, duplicates summed
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut push = |r: usize, c: usize, v: f64| {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        cols[c].push((r, v));
    };
    for &(f, t, b) in branches {
        if b == 0.0 {
            continue;
        }
        let (rf, rt) = (index[f], index[t]);
        if rf != usize::MAX {
            push(rf, rf, b);
        }
        if rt != usize::MAX {
            push(rt, rt, b);
        }
        if rf != usize::MAX && rt != usize::MAX {
            push(rf, rt, -b);
        }
    }
    let mut colptr = Vec::with_capacity(m + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(r, _)| r);
        let mut last: Option<usize> = None;
        for &(r, v) in col.iter() {
            if last == Some(r) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                last = Some(r);
            }
        }
        colptr.push(rowval.len());
    }
    let csc = CscMatrix::new(m, m, colptr, rowval, nzval);
    let settings = QDLDLSettingsBuilder::default()
        .regularize_enable(false)
        .build()
        .expect("valid qdldl settings");
    let factor = QDLDLFactorisation::new(&csc, Some(settings)).map_err(|_| KernelError::Singular)?;
    let scale = factor.D.iter().fold(0.0f64, |a, d| a.max(d.abs())).max(1.0);
    if factor.D.iter().any(|&d| !(d > 1e-13 * scale)) {
        return Err(KernelError::Singular);
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{bus, line, unit};
    use crate::network::{BusKind, PowerNetwork};

    fn two_bus(slack_second: bool) -> PowerNetwork {
        let (k1, k2) = if slack_second {
            (BusKind::Pq, BusKind::Slack)
        } else {
            (BusKind::Slack, BusKind::Pq)
        };
        let gen_bus = if slack_second { 1 } else { 0 };
        PowerNetwork::new(
            "two",
            100.0,
            vec![bus(1, k1, 0.0), bus(2, k2, 1.0)],
            vec![line(0, 1, 0.01, 0.1)],
            vec![unit(gen_bus, 0.0, 2.0, 10.0)],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_reduced_and_ptdf() {
        let net = two_bus(true);
        let sys = SusceptanceSystem::new(&net).unwrap();
        let b = sys.reduced_matrix();
        assert_eq!(b.shape(), (1, 1));
        assert!((b[(0, 0)] - 10.0).abs() < 1e-12);
        let row = sys.ptdf_row(0);
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert_eq!(row[1], 0.0);
    }

    #[test]
    fn two_bus_flow() {
        let net = two_bus(false);
        let sys = SusceptanceSystem::new(&net).unwrap();
        let (theta, flows) = sys.dc_flows(&[1.0, -1.0], false).unwrap();
        assert_eq!(theta[0], 0.0);
        assert!((flows[0] - 1.0).abs() < 1e-12);
        let (theta, flows) = sys.dc_flows(&[0.0, 0.0], false).unwrap();
        assert!(theta.iter().chain(&flows).all(|&v| v == 0.0));
        assert!(matches!(
            sys.dc_flows(&[1.0, 0.0], false),
            Err(KernelError::Imbalanced(_))
        ));
    }

    #[test]
    fn incidence_skips_out_of_service() {
        let net = PowerNetwork::new(
            "tri",
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0),
                bus(2, BusKind::Pq, 0.0),
                bus(3, BusKind::Pq, 0.0),
            ],
            vec![line(0, 1, 0.0, 1.0), line(1, 2, 0.0, 1.0), line(0, 2, 0.0, 1.0)],
            vec![unit(0, 0.0, 1.0, 1.0)],
        )
        .unwrap();
        let a = build_incidence(&net);
        assert_eq!(
            a.to_dense(),
            DMatrix::from_row_slice(3, 3, &[1., -1., 0., 0., 1., -1., 1., 0., -1.])
        );
        let a = build_incidence(&net.with_branch_status(1, false));
        assert_eq!(a.n_rows(), 2);
        assert_eq!(a.branch_of_row(), &[0, 2]);
    }

    #[test]
    fn islanded_network_rejected() {
        let net = PowerNetwork::new(
            "isl",
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0),
                bus(2, BusKind::Pq, 0.0),
                bus(3, BusKind::Pq, 0.0),
            ],
            vec![line(0, 1, 0.0, 1.0), line(1, 2, 0.0, 1.0)],
            vec![unit(0, 0.0, 1.0, 1.0)],
        )
        .unwrap()
        .with_branch_status(1, false);
        assert!(matches!(
            SusceptanceSystem::new(&net),
            Err(KernelError::Islanded(2))
        ));
    }
}
