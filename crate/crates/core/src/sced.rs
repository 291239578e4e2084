//! Reserve-constrained economic dispatch around any loss formulation.
//!
//! Each in-service, reserve-capable generator gets a reserve variable with
//! `pg + r ≤ pmax`. A system-wide requirement `Σr ≥ R` and single-generator
//! contingency rows `Σ_{g≠k} r_g ≥ pg_k` are soft with a shared penalty.
//! Contingency rows enter lazily. Balance (at the slack bus) and thermal
//! limits are soft with their own penalties.
//!
//! A penalty of zero disables the corresponding relaxation; the constraint is
//! then hard.

use crate::dispatch::{formulate, DispatchError, DispatchOptions, DispatchSolution, SoftConstraints};
use crate::kernel::SusceptanceSystem;
use crate::network::{PowerNetwork, DEFAULT_COST_SEGMENTS};
use crate::solver::Sense;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_TRANSMISSION_PENALTY: f64 = 2000.0;
pub const DEFAULT_BALANCE_PENALTY: f64 = 10000.0;
pub const DEFAULT_RESERVE_PENALTY: f64 = 1100.0;
pub const DEFAULT_CONTINGENCY_ROUNDS: usize = 20;

const CONTINGENCY_TOLERANCE: f64 = 1e-7;

/// SCED settings; prices are per pu of violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScedConfig {
    /// System-wide reserve requirement (pu).
    pub reserve_requirement: f64,
    pub reserve_penalty: f64,
    pub balance_penalty: f64,
    pub transmission_penalty: f64,
    /// Generator indices whose loss must be covered by reserves. `None`
    /// selects the largest in-service unit by `pmax`; an empty list disables
    /// contingencies.
    pub contingencies: Option<Vec<usize>>,
    pub max_lazy_rounds: usize,
}

impl Default for ScedConfig {
    fn default() -> Self {
        ScedConfig {
            reserve_requirement: 0.0,
            reserve_penalty: DEFAULT_RESERVE_PENALTY,
            balance_penalty: DEFAULT_BALANCE_PENALTY,
            transmission_penalty: DEFAULT_TRANSMISSION_PENALTY,
            contingencies: None,
            max_lazy_rounds: DEFAULT_CONTINGENCY_ROUNDS,
        }
    }
}

impl ScedConfig {
    /// No reserves, no contingencies and every constraint hard: reproduces
    /// the plain formulation.
    pub fn plain() -> Self {
        ScedConfig {
            reserve_requirement: 0.0,
            reserve_penalty: 0.0,
            balance_penalty: 0.0,
            transmission_penalty: 0.0,
            contingencies: Some(Vec::new()),
            max_lazy_rounds: DEFAULT_CONTINGENCY_ROUNDS,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self, net: &PowerNetwork) -> Result<(), String> {
        if !(self.reserve_requirement >= 0.0) || !self.reserve_requirement.is_finite() {
            return Err(format!("reserve requirement {} must be ≥ 0", self.reserve_requirement));
        }
        for (name, v) in [
            ("reserve_penalty", self.reserve_penalty),
            ("balance_penalty", self.balance_penalty),
            ("transmission_penalty", self.transmission_penalty),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        if self.transmission_penalty > 0.0
            && self.balance_penalty > 0.0
            && self.transmission_penalty > self.balance_penalty
        {
            log::warn!("transmission penalty exceeds balance penalty");
        }
        if let Some(set) = &self.contingencies {
            if let Some(&g) = set.iter().find(|&&g| g >= net.generators.len()) {
                return Err(format!("contingency generator {g} does not exist"));
            }
        }
        Ok(())
    }

    /// Resolved contingency set.
    pub fn contingency_set(&self, net: &PowerNetwork) -> Vec<usize> {
        match &self.contingencies {
            Some(set) => set.clone(),
            None => largest_generator(net).into_iter().collect(),
        }
    }

    fn soft(&self) -> SoftConstraints {
        let opt = |v: f64| (v > 0.0).then_some(v);
        SoftConstraints {
            balance_penalty: opt(self.balance_penalty),
            transmission_penalty: opt(self.transmission_penalty),
        }
    }
}

/// Largest in-service generator by `pmax` (lowest index on ties).
pub fn largest_generator(net: &PowerNetwork) -> Option<usize> {
    net.generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service)
        .fold(None, |best: Option<(usize, f64)>, (k, g)| match best {
            Some((_, p)) if p >= g.pmax => best,
            _ => Some((k, g.pmax)),
        })
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyRecord {
    pub generator: usize,
    /// `max(0, pg_k − Σ_{g≠k} r_g)` at the final solution.
    pub violation: f64,
    /// Whether the contingency row was added to the model.
    pub enforced: bool,
}

#[derive(Debug, Clone)]
pub struct ScedSolution {
    pub dispatch: DispatchSolution,
    pub reserves: Vec<f64>,
    pub reserve_shortfall: f64,
    pub contingencies: Vec<ContingencyRecord>,
    /// Piecewise-linear generation cost at the dispatch.
    pub energy_cost: f64,
    /// Sum of penalty × violation over every soft constraint.
    pub penalty_cost: f64,
    pub rounds: usize,
    pub flags: Vec<String>,
}

impl ScedSolution {
    pub fn to_json(&self) -> String {
        let mut v = self.dispatch.json_value();
        let obj = v.as_object_mut().expect("object");
        obj.insert("reserves".into(), serde_json::json!(self.reserves));
        obj.insert(
            "violations".into(),
            serde_json::json!({
                "reserve_shortfall": self.reserve_shortfall,
                "balance_shortage": self.dispatch.balance_shortage,
                "balance_surplus": self.dispatch.balance_surplus,
                "overflow": self.dispatch.overflow,
                "contingencies": self.contingencies,
            }),
        );
        obj.insert("energy_cost".into(), serde_json::json!(self.energy_cost));
        obj.insert("penalty_cost".into(), serde_json::json!(self.penalty_cost));
        obj.insert("sced_rounds".into(), serde_json::json!(self.rounds));
        obj.insert("sced_flags".into(), serde_json::json!(self.flags));
        serde_json::to_string_pretty(&v).expect("serializes")
    }
}

/// Uncovered loss if `gen` trips: `max(0, pg_gen − Σ_{g≠gen} r_g)`.
pub fn check_contingency(sol: &ScedSolution, gen: usize) -> Result<f64, String> {
    contingency_violation(&sol.dispatch.pg, &sol.reserves, gen)
}

fn contingency_violation(pg: &[f64], reserves: &[f64], gen: usize) -> Result<f64, String> {
    if gen >= pg.len() {
        return Err(format!("unknown generator {gen}"));
    }
    let others: f64 = reserves
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != gen)
        .map(|(_, r)| r)
        .sum();
    Ok((pg[gen] - others).max(0.0))
}

pub fn solve_sced(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    opts: &DispatchOptions,
    cfg: &ScedConfig,
) -> Result<ScedSolution, DispatchError> {
    cfg.validate(net).map_err(DispatchError::Numeric)?;
    let soft = cfg.soft();
    let mut f = formulate(net, sys, opts, soft)?;
    let reserve_soft = cfg.reserve_penalty > 0.0;
    let set = cfg.contingency_set(net);
    let needs_reserves = cfg.reserve_requirement > 0.0 || !set.is_empty();

    let mut reserve = vec![None; net.generators.len()];
    for (g, gen) in net.generators.iter().enumerate() {
        if !needs_reserves {
            break;
        }
        let Some(pg) = f.pg_var(g) else { continue };
        if !gen.reserve_capable {
            continue;
        }
        let m = f.model_mut();
        let r = m.add_variable(format!("reserve_{g}"), 0.0, f64::INFINITY, 0.0)?;
        m.add_constraint(&[(pg, 1.0), (r, 1.0)], Sense::Le, gen.pmax)?;
        reserve[g] = Some(r);
    }
    let mut shortfall = None;
    if cfg.reserve_requirement > 0.0 {
        let m = f.model_mut();
        let mut row: Vec<(usize, f64)> = reserve.iter().flatten().map(|&r| (r, 1.0)).collect();
        if reserve_soft {
            let s = m.add_variable("reserve_shortfall", 0.0, f64::INFINITY, cfg.reserve_penalty)?;
            row.push((s, 1.0));
            shortfall = Some(s);
        }
        m.add_constraint(&row, Sense::Ge, cfg.reserve_requirement)?;
    }

    let mut enforced: BTreeSet<usize> = BTreeSet::new();
    let mut cshort: Vec<(usize, usize)> = Vec::new();
    let mut rounds = 0;
    let mut flags = Vec::new();
    loop {
        f.run()?;
        let res = f.last_result().expect("solved");
        let pg: Vec<f64> = (0..net.generators.len())
            .map(|g| f.pg_var(g).map_or(0.0, |v| res.value(v)))
            .collect();
        let rv: Vec<f64> = reserve.iter().map(|r| r.map_or(0.0, |r| res.value(r))).collect();
        let violated: Vec<usize> = set
            .iter()
            .copied()
            .filter(|g| !enforced.contains(g))
            .filter(|&g| contingency_violation(&pg, &rv, g).unwrap_or(0.0) > CONTINGENCY_TOLERANCE)
            .collect();
        if violated.is_empty() {
            break;
        }
        if rounds >= cfg.max_lazy_rounds {
            flags.push("sced-round-limit".to_string());
            break;
        }
        rounds += 1;
        for k in violated {
            let Some(pk) = f.pg_var(k) else { continue };
            let m = f.model_mut();
            let mut row: Vec<(usize, f64)> = reserve
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != k)
                .filter_map(|(_, r)| r.map(|r| (r, 1.0)))
                .collect();
            row.push((pk, -1.0));
            if reserve_soft {
                let s = m.add_variable(
                    format!("contingency_shortfall_{k}"),
                    0.0,
                    f64::INFINITY,
                    cfg.reserve_penalty,
                )?;
                row.push((s, 1.0));
                cshort.push((k, s));
            }
            m.add_constraint(&row, Sense::Ge, 0.0)?;
            enforced.insert(k);
        }
    }

    let dispatch = f.solution();
    let res = f.last_result().expect("solved");
    let reserves: Vec<f64> = reserve.iter().map(|r| r.map_or(0.0, |r| res.value(r))).collect();
    let reserve_shortfall = shortfall.map_or(0.0, |s| res.value(s));
    let contingency_short: f64 = cshort.iter().map(|&(_, s)| res.value(s)).sum();
    let energy_cost: f64 = net
        .generators
        .iter()
        .zip(&dispatch.pg)
        .filter(|(g, _)| g.in_service)
        .map(|(g, &p)| g.piecewise_cost(DEFAULT_COST_SEGMENTS).eval(p))
        .sum();
    let penalty_cost = cfg.reserve_penalty * (reserve_shortfall + contingency_short)
        + cfg.balance_penalty * (dispatch.balance_shortage + dispatch.balance_surplus)
        + cfg.transmission_penalty * dispatch.overflow.iter().sum::<f64>();
    let contingencies = set
        .iter()
        .map(|&g| ContingencyRecord {
            generator: g,
            violation: contingency_violation(&dispatch.pg, &reserves, g).unwrap_or(0.0),
            enforced: enforced.contains(&g),
        })
        .collect();
    Ok(ScedSolution {
        dispatch,
        reserves,
        reserve_shortfall,
        contingencies,
        energy_cost,
        penalty_cost,
        rounds,
        flags,
    })
}
