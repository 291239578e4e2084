mod common;

use common::{bundled, bus, dense_losses, line, triangle, two_bus, unit};
use lineloss::dispatch::*;
use lineloss::kernel::SusceptanceSystem;
use lineloss::network::{BusKind, PowerNetwork};

fn sys(net: &PowerNetwork) -> SusceptanceSystem {
    SusceptanceSystem::new(net).unwrap()
}

fn zero_resistance(net: &PowerNetwork) -> PowerNetwork {
    let mut n = net.clone();
    for b in &mut n.branches {
        b.r = 0.0;
    }
    n
}

#[test]
fn two_bus_loss_factors_closed_form() {
    let net = two_bus();
    let s = sys(&net);
    let lf = reference_loss_factors(&net, &s).unwrap();
    // Reference: 1 pu from bus 2 to the slack; losses r·1² = 0.01.
    assert!((lf.lf[0]).abs() < 1e-12);
    assert!((lf.lf[1] - 0.02).abs() < 1e-12);
    assert!((lf.offset + 0.01).abs() < 1e-12);
    assert!((lf.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn two_bus_lllf_dispatch_closed_form() {
    let net = two_bus();
    let sol = solve(&net, &sys(&net), &DispatchOptions::new(Method::Lllf)).unwrap();
    // pg − (−0.01 + 0.02·pg) = 1
    assert!((sol.pg[1] - 0.99 / 0.98).abs() < 1e-7, "{}", sol.pg[1]);
    assert!(sol.pg[0].abs() < 1e-9);
}

/// Same system with the line oriented from the generator bus, so the
/// metered (from-end) flow is the generator output.
fn two_bus_from_generator() -> PowerNetwork {
    let mut net = two_bus();
    net.branches[0].from = 1;
    net.branches[0].to = 0;
    net
}

#[test]
fn quadratic_losses_use_the_from_end_flow() {
    // From-end at the load: 1 pu arrives, losses r·1².
    let net = two_bus();
    let sol = solve_llqcp(&net, &sys(&net), QcpBackend::Conic).unwrap();
    assert!((sol.pg[1] - 1.01).abs() < 1e-6, "{}", sol.pg[1]);
}

#[test]
fn two_bus_llqcp_matches_quadratic_root() {
    let net = two_bus_from_generator();
    let sol = solve_llqcp(&net, &sys(&net), QcpBackend::Conic).unwrap();
    // pg = 1 + r·pg²
    let expected = (1.0 - (1.0 - 4.0 * 0.01_f64).sqrt()) / (2.0 * 0.01);
    assert!((sol.pg[1] - expected).abs() < 1e-6, "{} vs {expected}", sol.pg[1]);
    assert!((sol.loss_total - 0.01 * expected * expected).abs() < 1e-6);
}

#[test]
fn lloa_converges_to_quadratic_root() {
    let net = two_bus_from_generator();
    let run = solve_lloa(&net, &sys(&net), &LloaOptions { epsilon: 1e-10, ..Default::default() }).unwrap();
    let expected = (1.0 - (1.0 - 4.0 * 0.01_f64).sqrt()) / (2.0 * 0.01);
    assert!((run.solution.pg[1] - expected).abs() < 1e-6);
    assert!(run.trace.windows(2).all(|w| w[0].objective <= w[1].objective + 1e-9));
    assert!(run.trace.iter().skip(1).all(|it| it.warm));
}

#[test]
fn lloa_iteration_cap_is_flagged() {
    let net = lineloss::cases::bundled("case118").unwrap();
    let opts = LloaOptions { epsilon: 1e-12, max_iter: 1, warm_start: false, ..Default::default() };
    let run = solve_lloa(&net, &sys(&net), &opts).unwrap();
    assert_eq!(run.solution.iterations, 1);
    assert!(run.solution.flags.iter().any(|f| f == "lloa-max-iter"));
}

#[test]
fn lloa_rejects_nonpositive_epsilon() {
    let net = two_bus();
    let opts = LloaOptions { epsilon: 0.0, ..Default::default() };
    assert!(matches!(solve_lloa(&net, &sys(&net), &opts), Err(DispatchError::Numeric(_))));
}

#[test]
fn angle_and_ptdf_dc_agree() {
    for (name, net) in bundled() {
        let s = sys(&net);
        let a = solve_vanilla_dc(&net, &s, DcVariant::Angle).unwrap();
        let p = solve_vanilla_dc(&net, &s, DcVariant::Ptdf).unwrap();
        for (x, y) in a.pg.iter().zip(&p.pg) {
            assert!((x - y).abs() < 1e-6, "{name}: {x} vs {y}");
        }
        assert!((a.objective - p.objective).abs() < 1e-6 * a.objective.abs());
    }
}

#[test]
fn lossless_dc_is_a_lower_bound() {
    for (name, net) in bundled() {
        let s = sys(&net);
        let dc = solve_vanilla_dc(&net, &s, DcVariant::Angle).unwrap();
        for m in [Method::Lllf, Method::Llqcp, Method::Lloa] {
            let sol = solve(&net, &s, &DispatchOptions::new(m)).unwrap();
            assert!(dc.objective <= sol.objective + 1e-6, "{name} {m}");
        }
    }
}

#[test]
fn zero_resistance_reduces_to_lossless_dc() {
    for net in [triangle(0.0), zero_resistance(&lineloss::cases::bundled("case30").unwrap())] {
        let s = sys(&net);
        let dc = solve_vanilla_dc(&net, &s, DcVariant::Angle).unwrap();
        for m in [Method::Lllf, Method::Llqcp, Method::Lloa] {
            let sol = solve(&net, &s, &DispatchOptions::new(m)).unwrap();
            assert!((sol.objective - dc.objective).abs() < 1e-7, "{m}: {} vs {}", sol.objective, dc.objective);
            assert!(sol.loss_total.abs() < 1e-7, "{m}: losses {}", sol.loss_total);
        }
    }
}

#[test]
fn balance_includes_estimated_losses() {
    for (name, net) in bundled() {
        let s = sys(&net);
        for m in Method::ALL {
            let sol = solve(&net, &s, &DispatchOptions::new(m)).unwrap();
            let gen: f64 = sol.pg.iter().sum();
            assert!(
                (gen - net.total_demand() - sol.loss_total).abs() < 1e-6,
                "{name} {m}: {gen} − {} ≠ {}",
                net.total_demand(),
                sol.loss_total
            );
        }
    }
}

#[test]
fn true_losses_are_quadratic_in_flows() {
    let net = lineloss::cases::bundled("case14").unwrap();
    let s = sys(&net);
    let sol = solve(&net, &s, &DispatchOptions::new(Method::Dc)).unwrap();
    let oracle = dense_losses(&net, &sol.injection);
    assert!((sol.total_true_losses() - oracle).abs() < 1e-9);
    let (per, total) = estimate_true_losses(&sol, &net);
    assert_eq!(per.len(), net.branches.len());
    assert!((total - oracle).abs() < 1e-9);
}

fn limited_triangle() -> PowerNetwork {
    // Cheap unit at bus 1 wants to serve the load at bus 2 directly.
    let mut net = triangle(0.01);
    net.branches[0].rate = 0.5;
    net
}

#[test]
fn thermal_limits_hold_for_every_method() {
    let net = limited_triangle();
    let s = sys(&net);
    for m in Method::ALL {
        for variant in [DcVariant::Angle, DcVariant::Ptdf] {
            let mut opts = DispatchOptions::new(m);
            opts.dc_variant = variant;
            let sol = solve(&net, &s, &opts).unwrap();
            assert!(sol.p_fwd[0].abs() <= 0.5 + 1e-7, "{m} {variant:?}: {}", sol.p_fwd[0]);
        }
    }
}

#[test]
fn lazy_thermal_rows_enter_only_when_violated() {
    let net = limited_triangle();
    let s = sys(&net);
    let mut opts = DispatchOptions::new(Method::Dc);
    opts.dc_variant = DcVariant::Ptdf;
    let sol = solve(&net, &s, &opts).unwrap();
    assert!(sol.iterations >= 1);
    let free = triangle(0.01);
    let sol = solve(&free, &sys(&free), &opts).unwrap();
    assert_eq!(sol.iterations, 0);
}

#[test]
fn soft_transmission_reports_overflow() {
    let mut net = limited_triangle();
    // Only the cheap unit remains, so the limit must be breached.
    net.generators[1].pmax = 0.0;
    net.branches[0].rate = 0.1;
    net.branches[2].rate = 0.1;
    let s = sys(&net);
    let opts = DispatchOptions::new(Method::Dc);
    assert!(matches!(solve(&net, &s, &opts), Err(DispatchError::Infeasible)));
    let soft = SoftConstraints { balance_penalty: None, transmission_penalty: Some(2000.0) };
    let mut f = formulate(&net, &s, &opts, soft).unwrap();
    f.run().unwrap();
    let sol = f.solution();
    assert!(sol.overflow.iter().sum::<f64>() > 0.5);
}

#[test]
fn demand_above_capacity_is_infeasible() {
    let net = PowerNetwork::new(
        "short",
        100.0,
        vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, 3.0)],
        vec![line(0, 1, 0.01, 0.1)],
        vec![unit(0, 0.0, 2.0, 10.0)],
    )
    .unwrap();
    let s = sys(&net);
    for m in Method::ALL {
        let r = solve(&net, &s, &DispatchOptions::new(m));
        assert!(matches!(r, Err(DispatchError::Infeasible)), "{m}: {r:?}");
    }
}

#[test]
fn soft_balance_absorbs_shortage() {
    let net = PowerNetwork::new(
        "short",
        100.0,
        vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, 3.0)],
        vec![line(0, 1, 0.0, 0.1)],
        vec![unit(0, 0.0, 2.0, 10.0)],
    )
    .unwrap();
    let s = sys(&net);
    let soft = SoftConstraints { balance_penalty: Some(10000.0), transmission_penalty: None };
    let mut f = formulate(&net, &s, &DispatchOptions::new(Method::Dc), soft).unwrap();
    f.run().unwrap();
    let sol = f.solution();
    assert!((sol.balance_shortage - 1.0).abs() < 1e-7);
    assert!(sol.balance_surplus.abs() < 1e-9);
}

#[test]
fn static_envelope_is_a_relaxation() {
    let net = lineloss::cases::bundled("case14").unwrap();
    let s = sys(&net);
    let conic = solve_llqcp(&net, &s, QcpBackend::Conic).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for h in [5, 17, 65, 257] {
        let st = solve_llqcp(&net, &s, QcpBackend::StaticOa { tangents: h }).unwrap();
        assert!(st.objective <= conic.objective + 1e-5 * conic.objective, "{h}");
        assert!(st.objective >= prev - 1e-6);
        prev = st.objective;
    }
    assert!((conic.objective - prev) / conic.objective < 1e-3);
}

#[test]
fn solution_json_round_trips_dispatch() {
    let net = lineloss::cases::bundled("case14").unwrap();
    let sol = solve(&net, &sys(&net), &DispatchOptions::new(Method::Lloa)).unwrap();
    let json = sol.to_json();
    let (m, pg) = DispatchSolution::dispatch_from_json(&json).unwrap();
    assert_eq!(m, Method::Lloa);
    assert_eq!(pg, sol.pg);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["branches"].as_array().unwrap().len(), net.branches.len());
    assert!(v["timing"].as_f64().is_some());
}

#[test]
fn method_names_parse() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("acopf".parse::<Method>().is_err());
}

#[test]
fn repeated_solves_are_identical() {
    let net = lineloss::cases::bundled("case30").unwrap();
    let s = sys(&net);
    for m in Method::ALL {
        let a = solve(&net, &s, &DispatchOptions::new(m)).unwrap();
        let b = solve(&net, &s, &DispatchOptions::new(m)).unwrap();
        assert_eq!(a.pg, b.pg, "{m}");
    }
}
