#![allow(dead_code)]

use lineloss::network::{Branch, Bus, BusKind, CostCurve, Generator, PowerNetwork};

pub fn bus(number: u32, kind: BusKind, pd: f64) -> Bus {
    Bus {
        number,
        kind,
        pd,
        qd: 0.0,
        gs: 0.0,
        bs: 0.0,
        area: 1,
        vm: 1.0,
        va: 0.0,
        base_kv: 230.0,
        zone: 1,
        vmax: 1.1,
        vmin: 0.9,
    }
}

pub fn line(from: usize, to: usize, r: f64, x: f64) -> Branch {
    Branch {
        from,
        to,
        r,
        x,
        charging: 0.0,
        rate: 0.0,
        rate_b: 0.0,
        rate_c: 0.0,
        tap: 0.0,
        shift: 0.0,
        in_service: true,
        angmin: -360.0,
        angmax: 360.0,
    }
}

pub fn unit(bus: usize, pmin: f64, pmax: f64, price: f64) -> Generator {
    Generator {
        bus,
        pg: 0.0,
        qg: 0.0,
        qmax: 10.0,
        qmin: -10.0,
        vg: 1.0,
        mbase: 100.0,
        in_service: true,
        pmax,
        pmin,
        cost: CostCurve::Polynomial(vec![0.0, price]),
        reserve_capable: true,
        ramp_rate: None,
    }
}

/// Load of 1 pu at the slack bus, cheap unit at bus 2, one line r=0.01 x=0.1.
pub fn two_bus() -> PowerNetwork {
    PowerNetwork::new(
        "two",
        100.0,
        vec![bus(1, BusKind::Slack, 1.0), bus(2, BusKind::Pv, 0.0)],
        vec![line(0, 1, 0.01, 0.1)],
        vec![unit(0, 0.0, 5.0, 100.0), unit(1, 0.0, 5.0, 10.0)],
    )
    .unwrap()
}

/// Three buses in a ring with unit reactances, slack at bus 3.
pub fn triangle(r: f64) -> PowerNetwork {
    PowerNetwork::new(
        "triangle",
        100.0,
        vec![
            bus(1, BusKind::Pv, 0.0),
            bus(2, BusKind::Pq, 1.0),
            bus(3, BusKind::Slack, 0.0),
        ],
        vec![line(0, 1, r, 1.0), line(1, 2, r, 1.0), line(0, 2, r, 1.0)],
        vec![unit(0, 0.0, 2.0, 10.0), unit(2, 0.0, 2.0, 20.0)],
    )
    .unwrap()
}

pub fn bundled() -> Vec<(&'static str, PowerNetwork)> {
    lineloss::cases::BUNDLED
        .iter()
        .map(|&n| (n, lineloss::cases::bundled(n).unwrap()))
        .collect()
}

/// `Σ r·(Φp)²` with `Φ` computed independently from the dense reduced
/// susceptance inverse.
pub fn dense_losses(net: &PowerNetwork, p: &[f64]) -> f64 {
    let flows = dense_flows(net, p);
    net.branches
        .iter()
        .zip(&flows)
        .filter(|(b, _)| b.in_service)
        .map(|(b, f)| b.r * f * f)
        .sum()
}

/// DC flows from a dense inverse of the reduced susceptance matrix.
pub fn dense_flows(net: &PowerNetwork, p: &[f64]) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let n = net.n_buses();
    let s = net.slack();
    let keep: Vec<usize> = (0..n).filter(|&i| i != s).collect();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for br in net.branches.iter().filter(|b| b.in_service) {
        let y = 1.0 / br.x;
        b[(br.from, br.from)] += y;
        b[(br.to, br.to)] += y;
        b[(br.from, br.to)] -= y;
        b[(br.to, br.from)] -= y;
    }
    let red = b.select_rows(&keep).select_columns(&keep);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| p[i]));
    let th = red.try_inverse().expect("invertible") * rhs;
    let mut theta = vec![0.0; n];
    for (k, &i) in keep.iter().enumerate() {
        theta[i] = th[k];
    }
    net.branches
        .iter()
        .map(|br| if br.in_service { (theta[br.from] - theta[br.to]) / br.x } else { 0.0 })
        .collect()
}
