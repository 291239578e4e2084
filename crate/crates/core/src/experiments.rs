//! Comparison metrics, load perturbation and sensitivity sweeps.

use crate::cases;
use crate::dispatch::{
    self, DispatchError, DispatchOptions, DispatchSolution, LloaOptions, Method, QcpBackend,
};
use crate::kernel::SusceptanceSystem;
use crate::network::PowerNetwork;
use crate::sced::{solve_sced, ScedConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

/// Generators whose dispatch differs by more than this are listed in a
/// difference profile.
pub const DIFF_THRESHOLD: f64 = 1e-3;

/// Signed percent gap `100·(obj − ref)/|ref|`.
pub fn objective_gap(method_obj: f64, reference_obj: f64) -> Result<f64, String> {
    if reference_obj == 0.0 {
        return Err("reference objective is zero".into());
    }
    Ok(100.0 * (method_obj - reference_obj) / reference_obj.abs())
}

/// Mean absolute per-generator difference (pu).
pub fn dispatch_mae(pg: &[f64], pg_ref: &[f64]) -> Result<f64, String> {
    if pg.len() != pg_ref.len() {
        return Err(format!("length mismatch: {} vs {}", pg.len(), pg_ref.len()));
    }
    if pg.is_empty() {
        return Ok(0.0);
    }
    Ok(pg.iter().zip(pg_ref).map(|(a, b)| (a - b).abs()).sum::<f64>() / pg.len() as f64)
}

/// Log-normal law with arithmetic mean `alpha` and standard deviation `sigma`.
pub fn load_noise(alpha: f64, sigma: f64) -> Result<LogNormal<f64>, String> {
    if !(alpha > 0.0) || !(sigma >= 0.0) {
        return Err(format!("need alpha > 0 and sigma ≥ 0, got {alpha}, {sigma}"));
    }
    let s2 = (1.0 + sigma * sigma / (alpha * alpha)).ln();
    let mu = (alpha * alpha / (alpha * alpha + sigma * sigma).sqrt()).ln();
    LogNormal::new(mu, s2.sqrt()).map_err(|e| e.to_string())
}

/// Copy of `net` with each load scaled by an independent log-normal factor
/// (mean `alpha`, std `sigma`); `qd` scales with `pd`. With `sigma == 0`
/// every load is scaled by exactly `alpha`.
pub fn perturb_loads(net: &PowerNetwork, alpha: f64, sigma: f64, seed: u64) -> PowerNetwork {
    let law = load_noise(alpha, sigma).expect("alpha > 0 and sigma ≥ 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = net.clone();
    for b in &mut out.buses {
        if b.pd == 0.0 && b.qd == 0.0 {
            continue;
        }
        let xi = if sigma == 0.0 { alpha } else { law.sample(&mut rng) };
        b.pd *= xi;
        b.qd *= xi;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffEntry {
    pub generator: usize,
    pub pmax: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffProfile {
    /// Every in-service generator, ordered by increasing `pmax`.
    pub entries: Vec<DiffEntry>,
    /// Entries with `|diff| > DIFF_THRESHOLD`.
    pub filtered: Vec<DiffEntry>,
    /// Share of generators within the threshold, in percent.
    pub near_identical_pct: f64,
    /// `(lower edge, upper edge, count)` of `|diff|` over the filtered set.
    pub histogram: Vec<(f64, f64, usize)>,
}

/// Per-generator `pg − pg_ref`, ordered by capacity, with the filtered subset.
pub fn generator_diff_profile(net: &PowerNetwork, pg: &[f64], pg_ref: &[f64], bins: usize) -> DiffProfile {
    let mut entries: Vec<DiffEntry> = net
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service)
        .map(|(k, g)| DiffEntry {
            generator: k,
            pmax: g.pmax,
            diff: pg[k] - pg_ref[k],
        })
        .collect();
    entries.sort_by(|a, b| a.pmax.total_cmp(&b.pmax).then(a.generator.cmp(&b.generator)));
    let filtered: Vec<DiffEntry> = entries
        .iter()
        .filter(|e| e.diff.abs() > DIFF_THRESHOLD)
        .cloned()
        .collect();
    let near_identical_pct = if entries.is_empty() {
        100.0
    } else {
        100.0 * (entries.len() - filtered.len()) as f64 / entries.len() as f64
    };
    let mut histogram = Vec::new();
    if !filtered.is_empty() && bins > 0 {
        let hi = filtered.iter().map(|e| e.diff.abs()).fold(0.0, f64::max);
        let lo = DIFF_THRESHOLD;
        let width = (hi - lo).max(f64::EPSILON) / bins as f64;
        let mut counts = vec![0usize; bins];
        for e in &filtered {
            let k = (((e.diff.abs() - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        for (k, c) in counts.into_iter().enumerate() {
            histogram.push((lo + k as f64 * width, lo + (k + 1) as f64 * width, c));
        }
    }
    DiffProfile {
        entries,
        filtered,
        near_identical_pct,
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowDiscrepancy {
    /// `Φ(p − ℓ·D)` flows minus quadratic-loss-model flows.
    pub per_branch: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Compares LLLF flows with the flows of the quadratic loss model evaluated
/// at the same non-slack dispatch (the slack generator covers the difference
/// in losses).
pub fn lllf_flow_discrepancy(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    lllf: &DispatchSolution,
) -> Result<FlowDiscrepancy, DispatchError> {
    let slack = net.slack();
    let mut fixed = net.clone();
    for (k, g) in fixed.generators.iter_mut().enumerate() {
        if g.in_service && g.bus != slack {
            g.pmin = lllf.pg[k];
            g.pmax = lllf.pg[k];
        }
        if g.bus == slack {
            g.pmin = 0.0_f64.min(g.pmin);
            g.pmax = g.pmax.max(net.total_capacity());
        }
    }
    let model2 = dispatch::solve_llqcp(&fixed, sys, QcpBackend::Conic)?;
    let per_branch: Vec<f64> = lllf.p_fwd.iter().zip(&model2.p_fwd).map(|(a, b)| a - b).collect();
    let n = net.branches.iter().filter(|b| b.in_service).count().max(1);
    Ok(FlowDiscrepancy {
        max_abs: per_branch.iter().fold(0.0, |a, v| a.max(v.abs())),
        mean_abs: per_branch.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        per_branch,
    })
}

/// Externally computed reference solution (for example an AC-OPF optimum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDispatch {
    pub objective: f64,
    pub pg: Vec<f64>,
}

impl ReferenceDispatch {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub case: String,
    pub alpha: f64,
    pub seed: u64,
    pub method: Method,
    pub objective: f64,
    pub gap_pct: f64,
    pub mae: f64,
    pub loss_est: f64,
    pub loss_true: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub solve_time: Duration,
}

/// Metrics of one solved method against a reference.
pub fn metric_row(
    case: &str,
    alpha: f64,
    seed: u64,
    sol: &DispatchSolution,
    reference: &ReferenceDispatch,
) -> Result<MetricRow, String> {
    Ok(MetricRow {
        case: case.to_string(),
        alpha,
        seed,
        method: sol.method,
        objective: sol.objective,
        gap_pct: objective_gap(sol.objective, reference.objective)?,
        mae: dispatch_mae(&sol.pg, &reference.pg)?,
        loss_est: sol.loss_total,
        loss_true: sol.total_true_losses(),
        iterations: sol.iterations,
        solve_time: sol.solve_time,
    })
}

fn default_alphas() -> Vec<f64> {
    (0..=10).map(|k| (90 + 2 * k) as f64 / 100.0).collect()
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_sigma() -> f64 {
    0.05
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_cases() -> Vec<String> {
    vec!["case14".into()]
}

fn default_epsilon() -> f64 {
    dispatch::DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_cases")]
    pub cases: Vec<String>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Wraps every solve in SCED when present.
    #[serde(default)]
    pub sced: Option<ScedConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            cases: default_cases(),
            alphas: default_alphas(),
            sigma: default_sigma(),
            seeds: default_seeds(),
            methods: default_methods(),
            epsilon: default_epsilon(),
            sced: None,
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Parses TOML or JSON by trying JSON first when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_toml(text)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0)) {
            return Err(format!("alpha {a} must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(format!("sigma {} must be ≥ 0", self.sigma));
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon {} must be positive", self.epsilon));
        }
        Ok(())
    }

    pub fn instance_count(&self) -> usize {
        self.cases.len() * self.alphas.len() * self.seeds.len() * self.methods.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub case: String,
    pub alpha: f64,
    pub seed: u64,
    pub method: Method,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub case: String,
    pub method: Method,
    pub alpha: f64,
    pub samples: usize,
    pub gap_pct: f64,
    pub mae: f64,
    pub loss_est: f64,
    pub loss_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<MetricRow>,
    pub exclusions: Vec<Exclusion>,
    pub total_instances: usize,
    pub series: Vec<SeriesPoint>,
    /// Soft expectations that did not hold (reported, never fatal).
    pub flags: Vec<String>,
}

fn solve_one(
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    method: Method,
    cfg: &SweepConfig,
) -> Result<DispatchSolution, DispatchError> {
    let mut opts = DispatchOptions::new(method);
    opts.lloa = LloaOptions {
        epsilon: cfg.epsilon,
        ..LloaOptions::default()
    };
    match &cfg.sced {
        Some(sc) => Ok(solve_sced(net, sys, &opts, sc)?.dispatch),
        None => dispatch::solve(net, sys, &opts),
    }
}

type InstanceOutcome = (Vec<MetricRow>, Vec<Exclusion>);

fn run_instance(base: &PowerNetwork, case: &str, alpha: f64, seed: u64, cfg: &SweepConfig) -> InstanceOutcome {
    let exclude_all = |reason: &str| {
        let ex = cfg
            .methods
            .iter()
            .map(|&m| Exclusion {
                case: case.to_string(),
                alpha,
                seed,
                method: m,
                reason: reason.to_string(),
            })
            .collect();
        (Vec::new(), ex)
    };
    let net = perturb_loads(base, alpha, cfg.sigma, seed);
    let sys = match SusceptanceSystem::new(&net) {
        Ok(s) => s,
        Err(e) => return exclude_all(&format!("kernel: {e}")),
    };
    if let Err(e) = solve_one(&net, &sys, Method::Dc, cfg) {
        return exclude_all(&format!("dc-infeasible: {e}"));
    }
    let reference = match solve_one(&net, &sys, Method::Llqcp, cfg) {
        Ok(s) => ReferenceDispatch {
            objective: s.objective,
            pg: s.pg,
        },
        Err(e) => return exclude_all(&format!("reference: {e}")),
    };
    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for &m in &cfg.methods {
        let outcome = solve_one(&net, &sys, m, cfg)
            .map_err(|e| e.to_string())
            .and_then(|sol| metric_row(case, alpha, seed, &sol, &reference));
        match outcome {
            Ok(r) => rows.push(r),
            Err(reason) => exclusions.push(Exclusion {
                case: case.to_string(),
                alpha,
                seed,
                method: m,
                reason,
            }),
        }
    }
    (rows, exclusions)
}

/// Runs every (case, α, seed, method) instance in parallel. Output order is
/// sorted and independent of scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport, String> {
    cfg.validate()?;
    let mut nets = Vec::new();
    for c in &cfg.cases {
        nets.push(cases::load(c).map_err(|e| format!("{c}: {e}"))?);
    }
    let mut jobs = Vec::new();
    for (ci, c) in cfg.cases.iter().enumerate() {
        for &a in &cfg.alphas {
            for &s in &cfg.seeds {
                jobs.push((ci, c.as_str(), a, s));
            }
        }
    }
    let outcomes: Vec<InstanceOutcome> = jobs
        .par_iter()
        .map(|&(ci, c, a, s)| run_instance(&nets[ci], c, a, s, cfg))
        .collect();
    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    for (r, e) in outcomes {
        rows.extend(r);
        exclusions.extend(e);
    }
    rows.sort_by(|x, y| {
        (x.case.as_str(), x.alpha, x.seed, x.method)
            .partial_cmp(&(y.case.as_str(), y.alpha, y.seed, y.method))
            .expect("finite alphas")
    });
    exclusions.sort_by(|x, y| {
        (x.case.as_str(), x.alpha, x.seed, x.method)
            .partial_cmp(&(y.case.as_str(), y.alpha, y.seed, y.method))
            .expect("finite alphas")
    });
    let series = average_series(&rows);
    let mut flags = Vec::new();
    for case in &cfg.cases {
        for &m in &cfg.methods {
            let pts: Vec<&SeriesPoint> = series.iter().filter(|p| &p.case == case && p.method == m).collect();
            if pts.windows(2).any(|w| w[1].loss_est < w[0].loss_est - 1e-9) {
                flags.push(format!("{case}/{m}: average estimated losses not monotone in alpha"));
            }
        }
    }
    Ok(SweepReport {
        total_instances: cfg.instance_count(),
        rows,
        exclusions,
        series,
        flags,
    })
}

/// Seed-averaged metrics per (case, method, α).
pub fn average_series(rows: &[MetricRow]) -> Vec<SeriesPoint> {
    let mut groups: BTreeMap<(String, Method, u64), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.case.clone(), r.method, r.alpha.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SeriesPoint> = groups
        .into_iter()
        .map(|((case, method, a), rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&MetricRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            SeriesPoint {
                case,
                method,
                alpha: f64::from_bits(a),
                samples: rs.len(),
                gap_pct: mean(|r| r.gap_pct),
                mae: mean(|r| r.mae),
                loss_est: mean(|r| r.loss_est),
                loss_true: mean(|r| r.loss_true),
            }
        })
        .collect();
    out.sort_by(|x, y| {
        (x.case.as_str(), x.method, x.alpha)
            .partial_cmp(&(y.case.as_str(), y.method, y.alpha))
            .expect("finite alphas")
    });
    out
}

/// Per-instance metrics without timing; byte-identical for identical input.
pub fn write_rows_csv<W: Write>(rows: &[MetricRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case", "alpha", "seed", "method", "objective", "gap_pct", "mae", "loss_est", "loss_true",
        "iterations",
    ])?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            format!("{:.2}", r.alpha),
            r.seed.to_string(),
            r.method.to_string(),
            format!("{:.6}", r.objective),
            format!("{:.6}", r.gap_pct),
            format!("{:.8}", r.mae),
            format!("{:.8}", r.loss_est),
            format!("{:.8}", r.loss_true),
            r.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Solve times, kept apart from the deterministic metrics.
pub fn write_timing_csv<W: Write>(rows: &[MetricRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "alpha", "seed", "method", "solve_time_s"])?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            format!("{:.2}", r.alpha),
            r.seed.to_string(),
            r.method.to_string(),
            format!("{:.6}", r.solve_time.as_secs_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(series: &[SeriesPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "method", "alpha", "samples", "gap_pct", "mae", "loss_est", "loss_true"])?;
    for p in series {
        w.write_record([
            p.case.clone(),
            p.method.to_string(),
            format!("{:.2}", p.alpha),
            p.samples.to_string(),
            format!("{:.6}", p.gap_pct),
            format!("{:.8}", p.mae),
            format!("{:.8}", p.loss_est),
            format!("{:.8}", p.loss_true),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_exclusions_csv<W: Write>(ex: &[Exclusion], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "alpha", "seed", "method", "reason"])?;
    for e in ex {
        w.write_record([
            e.case.clone(),
            format!("{:.2}", e.alpha),
            e.seed.to_string(),
            e.method.to_string(),
            e.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table of metric rows.
pub fn format_metric_table(rows: &[MetricRow]) -> String {
    let mut s = format!(
        "{:<10} {:>5} {:>4} {:<6} {:>14} {:>9} {:>10} {:>10} {:>5}\n",
        "case", "alpha", "seed", "method", "objective", "gap %", "MAE", "losses", "iter"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>5.2} {:>4} {:<6} {:>14.4} {:>9.4} {:>10.6} {:>10.6} {:>5}\n",
            r.case, r.alpha, r.seed, r.method, r.objective, r.gap_pct, r.mae, r.loss_est, r.iterations
        ));
    }
    s
}

/// Solves every method on one network and reports metrics against either
/// an external reference or the LLQCP solution.
pub fn compare_methods(
    case: &str,
    net: &PowerNetwork,
    sys: &SusceptanceSystem,
    methods: &[Method],
    reference: Option<&ReferenceDispatch>,
) -> Result<(Vec<MetricRow>, Vec<DispatchSolution>), DispatchError> {
    let sols: Vec<DispatchSolution> = methods
        .iter()
        .map(|&m| dispatch::solve(net, sys, &DispatchOptions::new(m)))
        .collect::<Result<_, _>>()?;
    let reference = match reference {
        Some(r) => r.clone(),
        None => {
            let q = match sols.iter().find(|s| s.method == Method::Llqcp) {
                Some(s) => s.clone(),
                None => dispatch::solve(net, sys, &DispatchOptions::new(Method::Llqcp))?,
            };
            ReferenceDispatch {
                objective: q.objective,
                pg: q.pg,
            }
        }
    };
    let rows = sols
        .iter()
        .map(|s| metric_row(case, 1.0, 0, s, &reference).map_err(DispatchError::Numeric))
        .collect::<Result<_, _>>()?;
    Ok((rows, sols))
}
