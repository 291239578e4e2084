mod common;

use common::{bus, dense_flows, dense_losses, line, unit};
use lineloss::dispatch::{compute_loss_factors, lloa_cut, static_oa_error_bound, static_points};
use lineloss::experiments::{dispatch_mae, objective_gap, perturb_loads};
use lineloss::kernel::SusceptanceSystem;
use lineloss::network::{BusKind, PowerNetwork};
use proptest::prelude::*;

/// Connected network: a random spanning tree plus extra branches.
fn arb_network() -> impl Strategy<Value = PowerNetwork> {
    (3usize..10)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            let extras = prop::collection::vec((0..n, 0..n), 0..n);
            let params = prop::collection::vec((0.0..0.05f64, 0.05..0.5f64), 2 * n);
            (Just(n), parents, extras, params, 0..n)
        })
        .prop_map(|(n, parents, extras, params, slack)| {
            let buses = (0..n)
                .map(|i| {
                    let kind = if i == slack { BusKind::Slack } else { BusKind::Pq };
                    bus(i as u32 + 1, kind, 0.1)
                })
                .collect();
            let mut pairs: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect();
            pairs.extend(extras.into_iter().filter(|(a, b)| a != b));
            let branches = pairs
                .iter()
                .zip(params.iter().cycle())
                .map(|(&(f, t), &(r, x))| line(f, t, r, x))
                .collect();
            PowerNetwork::new("random", 100.0, buses, branches, vec![unit(slack, 0.0, 10.0, 1.0)]).unwrap()
        })
}

fn balanced(net: &PowerNetwork, raw: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = raw.iter().take(net.n_buses()).copied().collect();
    let total: f64 = p.iter().sum();
    p[net.slack()] -= total;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn tangent_cut_underestimates(r in 1e-6..1.0f64, p_ref in -10.0..10.0f64, p in -10.0..10.0f64) {
        let cut = lloa_cut(r, p_ref);
        let gap = r * p * p - cut.eval(p);
        prop_assert!(gap >= -1e-12);
        prop_assert!((gap - r * (p - p_ref).powi(2)).abs() <= 1e-12);
        prop_assert!((r * p_ref * p_ref - cut.eval(p_ref)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ptdf_flows_match_dense_oracle(net in arb_network(), raw in prop::collection::vec(-1.0..1.0f64, 10)) {
        let sys = SusceptanceSystem::new(&net).unwrap();
        let p = balanced(&net, &raw);
        let oracle = dense_flows(&net, &p);
        let (_, flows) = sys.dc_flows(&p, false).unwrap();
        for k in 0..net.branches.len() {
            let via_ptdf: f64 = sys.ptdf_row(k).iter().zip(&p).map(|(a, b)| a * b).sum();
            prop_assert!((via_ptdf - oracle[k]).abs() < 1e-8);
            prop_assert!((flows[k] - oracle[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn flows_conserve_at_every_bus(net in arb_network(), raw in prop::collection::vec(-1.0..1.0f64, 10)) {
        let sys = SusceptanceSystem::new(&net).unwrap();
        let p = balanced(&net, &raw);
        let (_, flows) = sys.dc_flows(&p, false).unwrap();
        let mut out = vec![0.0; net.n_buses()];
        for (br, f) in net.branches.iter().zip(&flows) {
            out[br.from] += f;
            out[br.to] -= f;
        }
        for i in 0..net.n_buses() {
            prop_assert!((out[i] - p[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_factors_are_tangent(net in arb_network(), raw in prop::collection::vec(-1.0..1.0f64, 10)) {
        let sys = SusceptanceSystem::new(&net).unwrap();
        let p = balanced(&net, &raw);
        let lf = compute_loss_factors(&net, &sys, &p);
        let exact = dense_losses(&net, &p);
        prop_assert!((lf.total_loss(&p) - exact).abs() < 1e-9);
        if exact > 1e-12 {
            prop_assert!((lf.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(lf.distribution.iter().all(|&d| d >= 0.0));
        }
        // Gradient against central differences.
        let h = 1e-6;
        for i in 0..net.n_buses() {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (dense_losses(&net, &up) - dense_losses(&net, &dn)) / (2.0 * h);
            prop_assert!((fd - lf.lf[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn linearized_losses_underestimate(net in arb_network(),
                                       a in prop::collection::vec(-1.0..1.0f64, 10),
                                       b in prop::collection::vec(-1.0..1.0f64, 10)) {
        let sys = SusceptanceSystem::new(&net).unwrap();
        let p_ref = balanced(&net, &a);
        let p = balanced(&net, &b);
        let lf = compute_loss_factors(&net, &sys, &p_ref);
        prop_assert!(lf.total_loss(&p) <= dense_losses(&net, &p) + 1e-9);
    }

    #[test]
    fn static_envelope_error_is_bounded(r in 1e-4..0.1f64, t in 0.1..10.0f64, h in 2usize..40, s in 0.0..1.0f64) {
        let p = -t + 2.0 * t * s;
        let env = static_points(t, h)
            .into_iter()
            .map(|q| lloa_cut(r, q).eval(p))
            .fold(f64::NEG_INFINITY, f64::max);
        let err = r * p * p - env;
        prop_assert!(err >= -1e-12);
        prop_assert!(err <= static_oa_error_bound(r, t, h) + 1e-12);
    }

    #[test]
    fn gap_and_mae_basics(x in 1.0..1e6f64, y in 1.0..1e6f64, v in prop::collection::vec(-5.0..5.0f64, 1..20)) {
        let g = objective_gap(x, y).unwrap();
        prop_assert_eq!(g > 0.0, x > y);
        let w: Vec<f64> = v.iter().map(|a| a * 0.5).collect();
        let m = dispatch_mae(&v, &w).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m, dispatch_mae(&w, &v).unwrap());
    }

    #[test]
    fn noiseless_perturbation_is_exact(alpha in 0.5..1.5f64, seed in any::<u64>()) {
        let net = lineloss::cases::bundled("case14").unwrap();
        let p = perturb_loads(&net, alpha, 0.0, seed);
        for (a, b) in net.buses.iter().zip(&p.buses) {
            prop_assert_eq!(b.pd, a.pd * alpha);
        }
    }
}
