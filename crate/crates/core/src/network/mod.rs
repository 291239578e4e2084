//! Grid data model.
//!
//! Every quantity held by a [`PowerNetwork`] is per-unit on `base_mva`.
//! Buses are renumbered to contiguous 0-based indices at construction; the
//! external (case-file) bus number is kept on [`Bus::number`] so reports can
//! translate back.

mod cost;
mod matpower;

pub use cost::{CostCurve, PiecewiseCost, DEFAULT_COST_SEGMENTS};
pub use matpower::{parse_case, to_matpower};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Largest per-unit demand or thermal rating accepted from a case file.
/// Values above this almost always mean MW were written where pu was expected.
pub const PER_UNIT_SANITY_LIMIT: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{element}: {message}")]
    Semantic { element: String, message: String },
}

impl CaseError {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        CaseError::Syntax {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn semantic(element: impl Into<String>, message: impl Into<String>) -> Self {
        CaseError::Semantic {
            element: element.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub number: u32,
    pub kind: BusKind,
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance (pu at 1 pu voltage). Used by AC power flow only.
    pub gs: f64,
    /// Shunt susceptance (pu at 1 pu voltage). Used by AC power flow only.
    pub bs: f64,
    pub area: u32,
    /// Initial voltage magnitude (pu).
    pub vm: f64,
    /// Initial voltage angle (radians).
    pub va: f64,
    pub base_kv: f64,
    pub zone: u32,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Internal index of the from bus.
    pub from: usize,
    /// Internal index of the to bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance (pi model), AC only.
    pub charging: f64,
    /// Thermal limit in pu; 0 means unlimited.
    pub rate: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal tap ratio; 0 means no transformer.
    pub tap: f64,
    /// Phase shift (radians).
    pub shift: f64,
    pub in_service: bool,
    pub angmin: f64,
    pub angmax: f64,
}

impl Branch {
    /// DC series susceptance `1/x`.
    pub fn susceptance(&self) -> f64 {
        1.0 / self.x
    }

    /// Thermal limit, `None` when unlimited.
    pub fn limit(&self) -> Option<f64> {
        (self.rate > 0.0).then_some(self.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal index of the connection bus.
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    /// Voltage magnitude setpoint (pu).
    pub vg: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
    pub cost: CostCurve,
    pub reserve_capable: bool,
    /// Ramp limit in pu per dispatch interval; parsed, unused by single-period models.
    pub ramp_rate: Option<f64>,
}

impl Generator {
    /// Piecewise-linear view of the cost restricted to `[pmin, pmax]`.
    pub fn piecewise_cost(&self, segments: usize) -> PiecewiseCost {
        self.cost.to_piecewise(self.pmin, self.pmax, segments)
    }
}

/// Immutable per-unit network description. Safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl PowerNetwork {
    /// Builds a network and checks element-level invariants (bus references,
    /// bounds, reactances, a single slack). Connectivity is checked separately
    /// by [`PowerNetwork::validate`] so islanded data can still be inspected.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, CaseError> {
        let net = PowerNetwork {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
        };
        net.check_elements()?;
        Ok(net)
    }

    fn check_elements(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::semantic("baseMVA", "must be positive"));
        }
        if self.buses.is_empty() {
            return Err(CaseError::semantic("bus table", "no buses"));
        }
        let n = self.buses.len();
        let mut slack_count = 0;
        for bus in &self.buses {
            let id = format!("bus {}", bus.number);
            if bus.vmin > bus.vmax {
                return Err(CaseError::semantic(id, "vmin exceeds vmax"));
            }
            if !bus.pd.is_finite() || !bus.qd.is_finite() {
                return Err(CaseError::semantic(id, "non-finite demand"));
            }
            if bus.pd.abs() > PER_UNIT_SANITY_LIMIT {
                return Err(CaseError::semantic(id, "demand exceeds per-unit sanity limit"));
            }
            if bus.kind == BusKind::Slack {
                slack_count += 1;
            }
        }
        match slack_count {
            0 => return Err(CaseError::semantic("bus table", "no slack bus")),
            1 => {}
            _ => return Err(CaseError::semantic("bus table", "multiple slack buses")),
        }
        for (k, br) in self.branches.iter().enumerate() {
            let id = format!("branch {}", k + 1);
            if br.from >= n || br.to >= n {
                return Err(CaseError::semantic(id, "references unknown bus"));
            }
            if br.from == br.to {
                return Err(CaseError::semantic(id, "from and to bus coincide"));
            }
            if br.in_service && br.x == 0.0 {
                return Err(CaseError::semantic(id, "zero reactance"));
            }
            if br.r < 0.0 {
                return Err(CaseError::semantic(id, "negative resistance"));
            }
            if br.rate < 0.0 {
                return Err(CaseError::semantic(id, "negative thermal rating"));
            }
            if br.rate > PER_UNIT_SANITY_LIMIT {
                return Err(CaseError::semantic(id, "rating exceeds per-unit sanity limit"));
            }
        }
        if self.generators.is_empty() {
            return Err(CaseError::semantic("gen table", "no generators"));
        }
        for (k, g) in self.generators.iter().enumerate() {
            let id = format!("generator {}", k + 1);
            if g.bus >= n {
                return Err(CaseError::semantic(id, "references unknown bus"));
            }
            if g.pmin > g.pmax {
                return Err(CaseError::semantic(id, "pmin exceeds pmax"));
            }
            g.cost.check().map_err(|m| CaseError::semantic(id.clone(), m))?;
        }
        let slack = self.slack();
        if !self
            .generators
            .iter()
            .any(|g| g.in_service && g.bus == slack)
        {
            return Err(CaseError::semantic(
                format!("bus {}", self.buses[slack].number),
                "slack bus has no in-service generator",
            ));
        }
        Ok(())
    }

    /// Full validation: element invariants plus connectivity of the
    /// in-service graph.
    pub fn validate(&self) -> Result<(), CaseError> {
        self.check_elements()?;
        let islands = validate_connectivity(self);
        if !islands.is_empty() {
            return Err(CaseError::semantic(
                "network",
                format!("disconnected graph with {} islands", islands.len()),
            ));
        }
        Ok(())
    }

    /// Internal index of the slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Internal index for an external bus number.
    pub fn bus_index(&self, number: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.number == number)
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.pd).sum()
    }

    /// Indices of in-service generators attached to each bus.
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (k, g) in self.generators.iter().enumerate() {
            if g.in_service {
                out[g.bus].push(k);
            }
        }
        out
    }

    /// Sum of in-service generator capacity; also a bound on any DC branch flow.
    pub fn total_capacity(&self) -> f64 {
        self.generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.pmax)
            .sum()
    }

    /// Copy with one branch switched in or out of service.
    pub fn with_branch_status(&self, branch: usize, in_service: bool) -> PowerNetwork {
        let mut net = self.clone();
        net.branches[branch].in_service = in_service;
        net
    }

    /// Canonical JSON dump (per-unit, internal indices).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let net: PowerNetwork = serde_json::from_str(text)
            .map_err(|e| CaseError::syntax(e.line(), e.to_string()))?;
        net.check_elements()?;
        Ok(net)
    }
}

/// Connected components over in-service branches, as sorted lists of
/// external bus numbers. Empty when the network is fully connected.
pub fn validate_connectivity(net: &PowerNetwork) -> Vec<Vec<u32>> {
    let n = net.buses.len();
    let mut adj = vec![Vec::new(); n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut component = vec![usize::MAX; n];
    let mut islands: Vec<Vec<u32>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = islands.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        component[start] = id;
        while let Some(u) = queue.pop_front() {
            members.push(net.buses[u].number);
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = id;
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        islands.push(members);
    }
    if islands.len() <= 1 {
        Vec::new()
    } else {
        islands.sort();
        islands
    }
}

/// Per-bus `(lower, upper)` net-injection bounds: attached generator limits
/// minus fixed demand.
pub fn net_injection_bounds(net: &PowerNetwork) -> Vec<(f64, f64)> {
    let mut bounds: Vec<(f64, f64)> = net.buses.iter().map(|b| (-b.pd, -b.pd)).collect();
    for g in net.generators.iter().filter(|g| g.in_service) {
        bounds[g.bus].0 += g.pmin;
        bounds[g.bus].1 += g.pmax;
    }
    bounds
}
