mod common;

use common::{bus, line, unit};
use lineloss::acpf::*;
use lineloss::dispatch::{solve, DispatchOptions, Method};
use lineloss::kernel::SusceptanceSystem;
use lineloss::network::{BusKind, PowerNetwork};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dc_dispatch(net: &PowerNetwork) -> Vec<f64> {
    let sys = SusceptanceSystem::new(net).unwrap();
    solve(net, &sys, &DispatchOptions::new(Method::Dc)).unwrap().pg
}

#[test]
fn ybus_of_tapped_branch_with_charging() {
    let mut br = line(0, 1, 0.02, 0.2);
    br.charging = 0.1;
    br.tap = 0.95;
    br.shift = 0.1;
    let mut b2 = bus(2, BusKind::Pq, 0.0);
    b2.gs = 0.01;
    b2.bs = 0.05;
    let net = PowerNetwork::new(
        "tap",
        100.0,
        vec![bus(1, BusKind::Slack, 0.0), b2],
        vec![br],
        vec![unit(0, 0.0, 1.0, 1.0)],
    )
    .unwrap();
    let y = build_ybus(&net);
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(0.02, 0.2);
    let bc = Complex64::new(0.0, 0.05);
    let t = Complex64::from_polar(0.95, 0.1);
    let close = |a: Complex64, b: Complex64| (a - b).norm() < 1e-12;
    assert!(close(y[(0, 0)], (ys + bc) / (t * t.conj())));
    assert!(close(y[(0, 1)], -ys / t.conj()));
    assert!(close(y[(1, 0)], -ys / t));
    assert!(close(y[(1, 1)], ys + bc + Complex64::new(0.01, 0.05)));
}

fn problem_for(net: &PowerNetwork) -> PowerFlowProblem {
    let mut p: Vec<f64> = net.buses.iter().map(|b| -b.pd).collect();
    let q: Vec<f64> = net.buses.iter().map(|b| -b.qd).collect();
    for g in net.generators.iter().filter(|g| g.in_service) {
        p[g.bus] += g.pg;
    }
    let kinds = net.buses.iter().map(|b| b.kind).collect();
    PowerFlowProblem::new(build_ybus(net), p, q, kinds)
}

#[test]
fn jacobian_matches_central_differences() {
    for name in ["case14", "case118"] {
        let net = lineloss::cases::bundled(name).unwrap();
        let prob = problem_for(&net);
        let n = net.n_buses();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vm: Vec<f64> = (0..n).map(|_| rng.random_range(0.95..1.05)).collect();
        let va: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        let jac = prob.jacobian(&vm, &va);

        let ang: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind != BusKind::Slack).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind == BusKind::Pq).collect();
        assert_eq!(jac.ncols(), prob.n_unknowns());
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let scale = jac.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (c, (&bus, is_angle)) in ang.iter().map(|b| (b, true)).chain(pq.iter().map(|b| (b, false))).enumerate() {
            let (mut vp, mut ap, mut vn, mut an) = (vm.clone(), va.clone(), vm.clone(), va.clone());
            if is_angle {
                ap[bus] += h;
                an[bus] -= h;
            } else {
                vp[bus] += h;
                vn[bus] -= h;
            }
            let fp = prob.residual(&vp, &ap);
            let fn_ = prob.residual(&vn, &an);
            for r in 0..fp.len() {
                let fd = (fp[r] - fn_[r]) / (2.0 * h);
                worst = worst.max((fd - jac[(r, c)]).abs());
            }
        }
        assert!(worst / scale < 1e-5, "{name}: {worst} relative to {scale}");
    }
}

#[test]
fn newton_converges_from_flat_start_on_bundled_cases() {
    let opts = PowerFlowOptions { enforce_q_limits: false, ..PowerFlowOptions::default() };
    for (name, net) in common::bundled() {
        let pg = dc_dispatch(&net);
        let st = run_power_flow(&net, &pg, None, &opts);
        assert!(st.converged, "{name}");
        assert!(st.iterations <= 10, "{name}: {} iterations", st.iterations);
        assert!(st.mismatch <= 1e-8);
    }
}

#[test]
fn restoration_preserves_non_slack_dispatch_bitwise() {
    for (name, net) in common::bundled() {
        let pg = dc_dispatch(&net);
        let st = run_power_flow(&net, &pg, None, &PowerFlowOptions::default());
        assert!(st.converged, "{name}");
        for (g, (&a, &b)) in pg.iter().zip(&st.pg).enumerate() {
            if g != st.slack_generator {
                assert_eq!(a.to_bits(), b.to_bits(), "{name} generator {g}");
            }
        }
        assert_eq!(net.generators[st.slack_generator].bus, net.slack());
        assert!((st.pg[st.slack_generator] - pg[st.slack_generator] - st.slack_pickup).abs() < 1e-12);
    }
}

#[test]
fn ac_losses_close_the_active_balance() {
    for (name, net) in common::bundled() {
        let pg = dc_dispatch(&net);
        let st = run_power_flow(&net, &pg, None, &PowerFlowOptions::default());
        let gen: f64 = st.pg.iter().sum();
        assert!((gen - net.total_demand() - st.ac_losses).abs() < 1e-7, "{name}");
        assert!(st.ac_losses > 0.0);
        // The DC dispatch ignores losses, so the slack covers them.
        assert!((st.slack_pickup - st.ac_losses).abs() < 1e-6);
    }
}

#[test]
fn reactive_limits_hold_at_pv_buses_after_switching() {
    let net = lineloss::cases::bundled("case14").unwrap();
    let pg = dc_dispatch(&net);
    let st = run_power_flow(&net, &pg, None, &PowerFlowOptions::default());
    assert!(st.converged);
    for (g, gen) in net.generators.iter().enumerate() {
        let b = gen.bus;
        if st.kinds[b] == BusKind::Pv && gen.in_service {
            assert!(st.qg[g] <= gen.qmax + 1e-6 && st.qg[g] >= gen.qmin - 1e-6, "gen {g}: {}", st.qg[g]);
        }
    }
}

#[test]
fn overloaded_system_does_not_converge() {
    let mut net = lineloss::cases::bundled("case14").unwrap();
    for b in &mut net.buses {
        b.pd *= 20.0;
        b.qd *= 20.0;
    }
    let pg: Vec<f64> = net.generators.iter().map(|g| g.pmax).collect();
    let st = run_power_flow(&net, &pg, None, &PowerFlowOptions::default());
    assert!(!st.converged);
    let rep = assess_violations(&st, &net);
    assert!(!rep.valid);
    assert_eq!(rep.active.count + rep.reactive.count + rep.voltage.count + rep.thermal.count, 0);
}

#[test]
fn violations_report_exceedances_only() {
    let mut net = lineloss::cases::bundled("case14").unwrap();
    net.branches[0].rate = 0.5;
    for b in &mut net.buses {
        b.vmax = 1.05;
    }
    let pg = dc_dispatch(&lineloss::cases::bundled("case14").unwrap());
    let st = run_power_flow(&net, &pg, None, &PowerFlowOptions::default());
    let rep = assess_violations(&st, &net);
    assert!(rep.thermal.count >= 1);
    assert!(rep.thermal.max > 1.0, "{}", rep.thermal.max);
    let over = st.vm.iter().filter(|&&v| v > 1.05 + DUST_TOLERANCE).count();
    assert_eq!(rep.voltage.count, over);
}

#[test]
fn restore_keeps_input_order_and_writes_csv() {
    let net = lineloss::cases::bundled("case30").unwrap();
    let sys = SusceptanceSystem::new(&net).unwrap();
    let sols: Vec<_> = [Method::Lloa, Method::Dc]
        .iter()
        .map(|&m| solve(&net, &sys, &DispatchOptions::new(m)).unwrap())
        .collect();
    let rows = restore_and_compare(&net, &sols);
    assert_eq!(rows[0].method, Method::Lloa);
    assert_eq!(rows[1].method, Method::Dc);
    assert!(rows.iter().all(|r| r.converged));
    let mut buf = Vec::new();
    write_restoration_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("method,converged,active_viol"));
    assert_eq!(text.lines().count(), 3);
    assert!(format_restoration_table(&rows).contains("lloa"));
}
