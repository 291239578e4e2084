use crate::kernel::SusceptanceSystem;
use crate::network::PowerNetwork;
use serde::{Deserialize, Serialize};

/// Linearized total-loss model around a reference injection.
///
/// `ℓ_tot(p) = offset + lfᵀp` is tangent to `Σ r·f(p)²` at the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFactorData {
    /// Gradient of total quadratic losses with respect to bus injections.
    pub lf: Vec<f64>,
    pub offset: f64,
    /// Per-bus share of total losses used when computing LLLF flows.
    pub distribution: Vec<f64>,
    pub ref_flows: Vec<f64>,
    pub ref_injections: Vec<f64>,
    /// Set when reference losses were zero and `distribution` is uniform.
    pub uniform_distribution: bool,
}

impl LossFactorData {
    /// Zero loss factors and offset: LLLF then reduces to lossless PTDF DC.
    pub fn lossless(net: &PowerNetwork) -> Self {
        let n = net.n_buses();
        LossFactorData {
            lf: vec![0.0; n],
            offset: 0.0,
            distribution: vec![1.0 / n as f64; n],
            ref_flows: vec![0.0; net.branches.len()],
            ref_injections: vec![0.0; n],
            uniform_distribution: true,
        }
    }

    /// Linearized total loss at injection vector `p`.
    pub fn total_loss(&self, p: &[f64]) -> f64 {
        self.offset + self.lf.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn reference_losses(&self, net: &PowerNetwork) -> f64 {
        quadratic_losses(net, &self.ref_flows)
    }
}

/// `Σ r·f²` over in-service branches.
pub fn quadratic_losses(net: &PowerNetwork, flows: &[f64]) -> f64 {
    net.branches
        .iter()
        .zip(flows)
        .filter(|(b, _)| b.in_service)
        .map(|(b, f)| b.r * f * f)
        .sum()
}

/// Loss factors, offset and distribution factors at `p_ref` (per-bus
/// injections; any imbalance is absorbed at the slack bus).
pub fn compute_loss_factors(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    p_ref: &[f64],
) -> LossFactorData {
    let n = net.n_buses();
    let (_, flows) = sys
        .dc_flows(p_ref, true)
        .expect("imbalance absorbed at the slack");
    // LF = Φᵀw with w_e = 2 r_e f_e, via one solve against Aᵀ(b ⊙ w)
    let mut rhs = vec![0.0; n];
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let v = 2.0 * br.r * flows[k] * sys.susceptance(k);
        rhs[br.from] += v;
        rhs[br.to] -= v;
    }
    let lf = sys.solve(&rhs);
    let total = quadratic_losses(net, &flows);
    let offset = total - lf.iter().zip(p_ref).map(|(a, b)| a * b).sum::<f64>();

    let mut distribution = vec![0.0; n];
    let uniform_distribution = !(total > 0.0);
    if uniform_distribution {
        distribution.fill(1.0 / n as f64);
    } else {
        for (k, br) in net.branches.iter().enumerate() {
            if br.in_service {
                let share = 0.5 * br.r * flows[k] * flows[k] / total;
                distribution[br.from] += share;
                distribution[br.to] += share;
            }
        }
    }
    LossFactorData {
        lf,
        offset,
        distribution,
        ref_flows: flows,
        ref_injections: p_ref.to_vec(),
        uniform_distribution,
    }
}
