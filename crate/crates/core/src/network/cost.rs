use serde::{Deserialize, Serialize};

/// Segment count used when converting quadratic costs to piecewise-linear form.
pub const DEFAULT_COST_SEGMENTS: usize = 10;

/// Generator cost as a function of active output in pu, in $/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCurve {
    /// Coefficients lowest degree first: `c0 + c1 p + c2 p^2`.
    Polynomial(Vec<f64>),
    /// Breakpoints `(p, cost)` with strictly increasing `p`.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl CostCurve {
    pub(crate) fn check(&self) -> Result<(), String> {
        match self {
            CostCurve::Polynomial(c) => {
                if c.len() > 3 {
                    return Err(format!("polynomial cost of degree {} (max 2)", c.len() - 1));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err("non-finite cost coefficient".into());
                }
                if c.len() == 3 && c[2] < 0.0 {
                    return Err("concave quadratic cost".into());
                }
                Ok(())
            }
            CostCurve::PiecewiseLinear(pts) => {
                if pts.len() < 2 {
                    return Err("piecewise cost needs at least two points".into());
                }
                let mut last_slope = f64::NEG_INFINITY;
                for w in pts.windows(2) {
                    let dp = w[1].0 - w[0].0;
                    if dp <= 0.0 {
                        return Err("piecewise breakpoints not increasing".into());
                    }
                    let slope = (w[1].1 - w[0].1) / dp;
                    if slope < last_slope - 1e-12 * slope.abs().max(1.0) {
                        return Err("piecewise cost is not convex".into());
                    }
                    last_slope = slope;
                }
                Ok(())
            }
        }
    }

    /// Exact cost at `p`. Piecewise curves extrapolate their end segments.
    pub fn eval(&self, p: f64) -> f64 {
        match self {
            CostCurve::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &k| acc * p + k),
            CostCurve::PiecewiseLinear(pts) => interpolate(pts, p),
        }
    }

    /// Convex piecewise-linear approximation on `[pmin, pmax]`.
    ///
    /// Quadratics are sampled at `segments` uniform intervals (secant
    /// interpolation, so the approximation never under-estimates). Linear
    /// polynomials and piecewise input are represented exactly.
    pub fn to_piecewise(&self, pmin: f64, pmax: f64, segments: usize) -> PiecewiseCost {
        let segments = segments.max(1);
        if pmax <= pmin {
            return PiecewiseCost {
                points: vec![(pmin, self.eval(pmin))],
            };
        }
        let points = match self {
            CostCurve::Polynomial(c) if c.len() == 3 && c[2] != 0.0 => (0..=segments)
                .map(|k| {
                    let p = if k == segments {
                        pmax
                    } else {
                        pmin + (pmax - pmin) * k as f64 / segments as f64
                    };
                    (p, self.eval(p))
                })
                .collect(),
            CostCurve::Polynomial(_) => vec![(pmin, self.eval(pmin)), (pmax, self.eval(pmax))],
            CostCurve::PiecewiseLinear(pts) => {
                let mut out = vec![(pmin, interpolate(pts, pmin))];
                out.extend(pts.iter().copied().filter(|&(p, _)| p > pmin && p < pmax));
                out.push((pmax, interpolate(pts, pmax)));
                out
            }
        };
        PiecewiseCost { points }
    }
}

fn interpolate(pts: &[(f64, f64)], p: f64) -> f64 {
    let k = match pts.iter().position(|&(x, _)| x >= p) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => pts.len() - 2,
    };
    let (x0, y0) = pts[k];
    let (x1, y1) = pts[k + 1];
    y0 + (y1 - y0) * (p - x0) / (x1 - x0)
}

/// Convex piecewise-linear cost on a closed output interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCost {
    points: Vec<(f64, f64)>,
}

impl PiecewiseCost {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Cost at the lower end of the interval.
    pub fn base_cost(&self) -> f64 {
        self.points[0].1
    }

    /// `(width, marginal price)` of each segment, in output order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
    }

    pub fn eval(&self, p: f64) -> f64 {
        if self.points.len() == 1 {
            return self.points[0].1;
        }
        interpolate(&self.points, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_secants_overestimate() {
        let c = CostCurve::Polynomial(vec![0.0, 2000.0, 430.0]);
        let pw = c.to_piecewise(0.0, 3.324, 10);
        assert_eq!(pw.points().len(), 11);
        for k in 0..=100 {
            let p = 3.324 * k as f64 / 100.0;
            assert!(pw.eval(p) >= c.eval(p) - 1e-9);
        }
        let slopes: Vec<f64> = pw.segments().map(|s| s.1).collect();
        assert!(slopes.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn linear_cost_is_exact() {
        let c = CostCurve::Polynomial(vec![5.0, 10.0]);
        let pw = c.to_piecewise(0.5, 2.0, 10);
        assert_eq!(pw.points().len(), 2);
        assert_eq!(pw.base_cost(), 10.0);
        assert_eq!(pw.segments().next(), Some((1.5, 10.0)));
    }

    #[test]
    fn nonconvex_piecewise_rejected() {
        let c = CostCurve::PiecewiseLinear(vec![(0.0, 0.0), (1.0, 10.0), (2.0, 15.0)]);
        assert!(c.check().is_err());
    }

    #[test]
    fn piecewise_restriction_extrapolates() {
        let c = CostCurve::PiecewiseLinear(vec![(0.0, 0.0), (1.0, 10.0), (2.0, 30.0)]);
        let pw = c.to_piecewise(0.5, 3.0, 4);
        assert_eq!(pw.points(), &[(0.5, 5.0), (1.0, 10.0), (2.0, 30.0), (3.0, 50.0)]);
    }
}
