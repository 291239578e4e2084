use serde::Serialize;

/// Tangent cut `p_fwd + p_bwd ≥ slope·p_fwd + intercept` to `ℓ = r·p²` at
/// `p_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossCut {
    pub slope: f64,
    pub intercept: f64,
}

impl LossCut {
    /// Right-hand side of the cut at forward flow `p`.
    pub fn eval(&self, p: f64) -> f64 {
        self.slope * p + self.intercept
    }
}

/// Cut coefficients for a branch with resistance `r` at reference flow `p_ref`.
pub fn lloa_cut(r: f64, p_ref: f64) -> LossCut {
    LossCut {
        slope: 2.0 * r * p_ref,
        intercept: -r * p_ref * p_ref,
    }
}

/// Accumulated linearization points (one forward-flow vector per point).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutPool {
    points: Vec<Vec<f64>>,
    capacity: Option<usize>,
}

impl CutPool {
    /// Pool holding at most `max_points` linearization points.
    pub fn with_capacity(max_points: usize) -> Self {
        CutPool {
            points: Vec::new(),
            capacity: Some(max_points),
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity.is_some_and(|c| self.points.len() >= c)
    }

    /// Adds a point; returns false when the pool is full.
    pub fn push(&mut self, flows: Vec<f64>) -> bool {
        if self.is_full() {
            return false;
        }
        self.points.push(flows);
        true
    }

    /// Cuts for one branch across every point in the pool.
    pub fn branch_cuts(&self, branch: usize, r: f64) -> impl Iterator<Item = LossCut> + '_ {
        self.points.iter().map(move |p| lloa_cut(r, p[branch]))
    }
}

/// `H` uniformly spaced tangent points on `[−t, t]`, endpoints included.
pub fn static_points(t: f64, h: usize) -> Vec<f64> {
    match h {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..h)
            .map(|k| -t + 2.0 * t * k as f64 / (h - 1) as f64)
            .collect(),
    }
}

/// Worst-case gap between `r·p²` and the envelope of tangents at
/// [`static_points`] over `[−t, t]`.
pub fn static_oa_error_bound(r: f64, t: f64, h: usize) -> f64 {
    if h < 2 {
        return r * t * t;
    }
    let half = t / (h - 1) as f64;
    r * half * half
}
