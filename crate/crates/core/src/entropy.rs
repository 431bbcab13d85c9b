//! (n, ε)-separated sets by greedy packing: entropy, pressure and fiber counts.

use crate::error::{KanError, Result};
use crate::exponents::least_squares;
use crate::seeding::item_rng;
use crate::series::TrigPoly;
use crate::skew::KanSystem;
use crate::torus::{circle_dist, ExpandingCircleMap};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const FULL_AUDIT_LIMIT: usize = 500;
pub const SAMPLED_AUDIT_PAIRS: usize = 20_000;
pub const FIBER_RATE_LIMIT: f64 = 0.05;
const DERIVATIVE_GRID: usize = 1 << 12;

/// The phase space being packed.
#[derive(Debug, Clone, Copy)]
pub enum Space<'a> {
    Circle(&'a ExpandingCircleMap),
    Cylinder(&'a KanSystem),
    /// `{θ} × [0, 1]` carried along the base orbit of `θ`.
    Fiber(&'a KanSystem, f64),
}

impl Space<'_> {
    fn base(&self) -> &ExpandingCircleMap {
        match self {
            Space::Circle(m) => m,
            Space::Cylinder(s) | Space::Fiber(s, _) => s.base(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Space::Circle(_) => "circle".into(),
            Space::Cylinder(_) => "cylinder".into(),
            Space::Fiber(_, th) => format!("fiber({th})"),
        }
    }

    fn has_t(&self) -> bool {
        !matches!(self, Space::Circle(_))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeparationAudit {
    pub pairs: usize,
    pub exhaustive: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparatedSetEstimate {
    pub n: usize,
    pub epsilon: f64,
    pub count: usize,
    pub region: String,
    pub scan_order: String,
    pub theta_spacing: f64,
    pub t_spacing: f64,
    pub candidates: usize,
    /// `log Σ exp(Φ_n)` over the admitted points; `log count` for `Φ = 0`.
    pub log_weight_sum: f64,
    pub audit: SeparationAudit,
    #[serde(skip)]
    pub points: Vec<(f64, f64)>,
}

/// Greedy maximal `(n, ε)`-separated set over a deterministic candidate grid,
/// scanned θ-major then `t`. `n = 0` packs the time-zero positions.
///
/// The grid spacing is `ε/4` in the Bowen metric: `ε/(4·max|E'|^{n−1})` in `θ`
/// and `ε/(4·max|∂_tφ|^{n−1})` in `t`.
pub fn separated_count(
    space: Space<'_>,
    n: usize,
    epsilon: f64,
    potential: Option<&TrigPoly>,
) -> Result<SeparatedSetEstimate> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(KanError::InvalidParameter(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let steps = n.max(1);
    let base = space.base();
    let big = base.max_abs_derivative(DERIVATIVE_GRID);
    let small = base.lambda();
    let theta_spacing = epsilon / (4.0 * big.powi(steps as i32 - 1));
    let max_dt = match space {
        Space::Circle(_) => 1.0,
        Space::Cylinder(s) | Space::Fiber(s, _) => fiber_derivative_bound(s),
    };
    let t_spacing = if space.has_t() {
        epsilon / (4.0 * max_dt.powi(steps as i32 - 1))
    } else {
        0.0
    };
    let thetas: Vec<f64> = match space {
        Space::Fiber(_, th) => vec![th],
        _ => {
            let cols = (1.0 / theta_spacing).ceil() as usize;
            (0..cols).map(|i| i as f64 / cols as f64).collect()
        }
    };
    let ts: Vec<f64> = if space.has_t() {
        let rows = (1.0 / t_spacing).ceil() as usize;
        (0..=rows).map(|j| j as f64 / rows as f64).collect()
    } else {
        vec![0.0]
    };
    let cols = thetas.len();
    // Closer than this in θ at time 0 is the only way to stay ε-close for n steps.
    let window = if epsilon * big < 0.5 {
        epsilon / small.powi(steps as i32 - 1)
    } else {
        epsilon
    };
    let reach = if cols > 1 {
        ((window * cols as f64).ceil() as usize + 1).min(cols)
    } else {
        cols
    };
    let wrap_all = 2 * reach + 1 >= cols;

    let mut packer = Packer::new(steps, epsilon);
    let mut theta_orbit = vec![0.0; steps];
    let mut slices = Vec::with_capacity(steps);
    let mut weight = 0.0;
    let mut cand = vec![0.0; steps];
    let mut candidates = 0usize;

    for (col, &th0) in thetas.iter().enumerate() {
        let mut th = th0;
        slices.clear();
        for slot in theta_orbit.iter_mut() {
            *slot = th;
            if let Space::Cylinder(s) | Space::Fiber(s, _) = space {
                slices.push(s.fiber().slice(th));
            }
            th = base.evaluate(th);
        }
        if let Some(phi) = potential {
            weight = theta_orbit.iter().map(|&x| phi.eval(x)).sum();
        }
        if !wrap_all {
            packer.retire_before(col.saturating_sub(reach));
        }
        for &t0 in &ts {
            candidates += 1;
            let mut t = t0;
            for (i, c) in cand.iter_mut().enumerate() {
                *c = t;
                if i + 1 < steps && !slices.is_empty() {
                    t = slices[i].value(t);
                }
            }
            let wraps = !wrap_all && col + reach >= cols;
            if packer.admissible(&theta_orbit, &cand, wraps) {
                packer.admit(col, &theta_orbit, &cand, weight, (th0, t0));
            }
        }
        if col + 1 == reach && !wrap_all {
            packer.freeze_head();
        }
    }
    let count = packer.len();
    let log_weight_sum = packer.log_weight_sum();
    let points = packer.points;
    let mut est = SeparatedSetEstimate {
        n,
        epsilon,
        count,
        region: space.label(),
        scan_order: "theta-major".into(),
        theta_spacing,
        t_spacing,
        candidates,
        log_weight_sum,
        audit: SeparationAudit::default(),
        points,
    };
    est.audit = audit(space, &est, 0);
    Ok(est)
}

fn fiber_derivative_bound(sys: &KanSystem) -> f64 {
    let mut m: f64 = 1.0;
    for i in 0..256 {
        let th = (i as f64 + 0.5) / 256.0;
        for j in 0..=64 {
            m = m.max(sys.fiber().dt(th, j as f64 / 64.0).abs());
        }
    }
    m
}

/// Admitted orbits inside the sliding θ-window, plus the first window kept for wrap-around.
struct Packer {
    steps: usize,
    epsilon: f64,
    live: VecDeque<(usize, Vec<f64>, Vec<f64>)>,
    head: Vec<(Vec<f64>, Vec<f64>)>,
    log_weights: Vec<f64>,
    points: Vec<(f64, f64)>,
}

impl Packer {
    fn new(steps: usize, epsilon: f64) -> Self {
        Self {
            steps,
            epsilon,
            live: VecDeque::new(),
            head: Vec::new(),
            log_weights: Vec::new(),
            points: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn retire_before(&mut self, col: usize) {
        while self.live.front().is_some_and(|x| x.0 < col) {
            self.live.pop_front();
        }
    }

    fn freeze_head(&mut self) {
        self.head = self.live.iter().map(|(_, a, b)| (a.clone(), b.clone())).collect();
    }

    fn close(&self, th: &[f64], t: &[f64], oth: &[f64], ot: &[f64]) -> bool {
        if (t[0] - ot[0]).abs() > self.epsilon {
            return false;
        }
        (0..self.steps).all(|i| circle_dist(th[i], oth[i]) <= self.epsilon && (t[i] - ot[i]).abs() <= self.epsilon)
    }

    fn admissible(&self, th: &[f64], t: &[f64], wraps: bool) -> bool {
        if self.live.iter().rev().any(|(_, a, b)| self.close(th, t, a, b)) {
            return false;
        }
        !(wraps && self.head.iter().any(|(a, b)| self.close(th, t, a, b)))
    }

    fn admit(&mut self, col: usize, th: &[f64], t: &[f64], log_w: f64, p: (f64, f64)) {
        self.live.push_back((col, th.to_vec(), t.to_vec()));
        self.log_weights.push(log_w);
        self.points.push(p);
    }

    fn log_weight_sum(&self) -> f64 {
        log_sum_exp(&self.log_weights)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|w| (w - m).exp()).sum::<f64>().ln()
}

/// `log Σ exp(Φ_n)` over an already selected set, for another potential on the base.
pub fn reweighted_log_sum(space: Space<'_>, est: &SeparatedSetEstimate, potential: &TrigPoly) -> f64 {
    let base = space.base();
    let steps = est.n.max(1);
    let logs: Vec<f64> = est
        .points
        .iter()
        .map(|&(th0, _)| {
            let mut th = th0;
            let mut acc = 0.0;
            for _ in 0..steps {
                acc += potential.eval(th);
                th = base.evaluate(th);
            }
            acc
        })
        .collect();
    log_sum_exp(&logs)
}

/// Re-simulate pairs of admitted points from their initial conditions.
pub fn audit(space: Space<'_>, est: &SeparatedSetEstimate, seed: u64) -> SeparationAudit {
    let pts = &est.points;
    let steps = est.n.max(1);
    let separated = |a: (f64, f64), b: (f64, f64)| -> bool {
        let (mut x, mut y) = (a, b);
        for i in 0..steps {
            if circle_dist(x.0, y.0).max((x.1 - y.1).abs()) > est.epsilon {
                return true;
            }
            if i + 1 < steps {
                x = advance(space, x);
                y = advance(space, y);
            }
        }
        false
    };
    let mut pairs = 0;
    let mut violations = 0;
    if pts.len() <= FULL_AUDIT_LIMIT {
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                pairs += 1;
                violations += usize::from(!separated(pts[i], pts[j]));
            }
        }
        return SeparationAudit {
            pairs,
            exhaustive: true,
            violations,
        };
    }
    let mut rng = item_rng(seed, pts.len() as u64);
    for k in 0..SAMPLED_AUDIT_PAIRS {
        let i = rng.random_range(0..pts.len() - 1);
        // Half the pairs are scan neighbours, the likeliest to collide.
        let j = if k % 2 == 0 {
            (i + rng.random_range(1..=4)).min(pts.len() - 1)
        } else {
            rng.random_range(0..pts.len())
        };
        if i == j {
            continue;
        }
        pairs += 1;
        violations += usize::from(!separated(pts[i], pts[j]));
    }
    SeparationAudit {
        pairs,
        exhaustive: false,
        violations,
    }
}

fn advance(space: Space<'_>, (th, t): (f64, f64)) -> (f64, f64) {
    match space {
        Space::Circle(m) => (m.evaluate(th), t),
        Space::Cylinder(s) | Space::Fiber(s, _) => s.step_unchecked(th, t),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub epsilon: f64,
    pub ns: Vec<usize>,
    pub log_counts: Vec<f64>,
    pub slope: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    pub region: String,
    pub fits: Vec<SlopeFit>,
    pub target: f64,
    /// Slope change per halving of ε, finest minus coarsest, divided by the number of halvings.
    pub epsilon_trend: f64,
    pub estimates: Vec<SeparatedSetEstimate>,
}

impl EntropyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,n,count\n");
        for e in &self.estimates {
            out.push_str(&format!("{},{},{}\n", crate::output::fmt_f64(e.epsilon), e.n, e.count));
        }
        out
    }
}

/// Least-squares slope with its standard error.
pub fn slope_with_error(points: &[(f64, f64)]) -> (f64, f64) {
    let (slope, icpt) = least_squares(points);
    let m = points.len() as f64;
    if points.len() < 3 {
        return (slope, f64::NAN);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let rss: f64 = points.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    (slope, (rss / (m - 2.0) / sxx).sqrt())
}

/// Growth rate of `log s(n, ε)` per `ε`, with `log |deg E|` as the target.
pub fn entropy_estimate(space: Space<'_>, epsilons: &[f64], ns: &[usize]) -> Result<EntropyReport> {
    pressure_estimate_range(space, None, epsilons, ns)
}

pub fn pressure_estimate_range(
    space: Space<'_>,
    potential: Option<&TrigPoly>,
    epsilons: &[f64],
    ns: &[usize],
) -> Result<EntropyReport> {
    let mut estimates = Vec::new();
    let mut fits = Vec::new();
    for &eps in epsilons {
        let mut pts = Vec::new();
        for &n in ns {
            let e = separated_count(space, n, eps, potential)?;
            pts.push((n as f64, e.log_weight_sum));
            estimates.push(e);
        }
        let (slope, standard_error) = slope_with_error(&pts);
        fits.push(SlopeFit {
            epsilon: eps,
            ns: ns.to_vec(),
            log_counts: pts.iter().map(|p| p.1).collect(),
            slope,
            standard_error,
        });
    }
    let epsilon_trend = match (fits.first(), fits.last()) {
        (Some(a), Some(b)) if fits.len() > 1 && a.epsilon != b.epsilon => {
            (b.slope - a.slope) / (a.epsilon / b.epsilon).log2()
        }
        _ => 0.0,
    };
    Ok(EntropyReport {
        region: space.label(),
        target: (space.base().degree().unsigned_abs() as f64).ln(),
        fits,
        epsilon_trend,
        estimates,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub n: usize,
    pub epsilon: f64,
    pub log_weight_sum: f64,
    /// `(1/n)·log S(Φ, n, ε)`
    pub pressure: f64,
}

/// `(1/n)·log Σ exp(Φ_n)` over a separated set on the cylinder, `Φ(θ, t) = φ(θ)`.
pub fn pressure_estimate(sys: &KanSystem, potential: &TrigPoly, n: usize, epsilon: f64) -> Result<PressureEstimate> {
    if n == 0 {
        return Err(KanError::InvalidParameter("pressure needs n >= 1".into()));
    }
    let e = separated_count(Space::Cylinder(sys), n, epsilon, Some(potential))?;
    Ok(PressureEstimate {
        n,
        epsilon,
        log_weight_sum: e.log_weight_sum,
        pressure: e.log_weight_sum / n as f64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberRow {
    pub theta: f64,
    pub counts: Vec<usize>,
    pub bound_ok: bool,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberEntropyReport {
    pub epsilon: f64,
    pub ns: Vec<usize>,
    pub rows: Vec<FiberRow>,
    pub passed: bool,
}

/// Per-fiber counts against `n(1/ε + 1)` and a fitted exponential rate below [`FIBER_RATE_LIMIT`].
pub fn fiber_entropy_check(sys: &KanSystem, thetas: &[f64], ns: &[usize], epsilon: f64) -> Result<FiberEntropyReport> {
    let mut rows = Vec::new();
    for &th in thetas {
        let mut counts = Vec::new();
        for &n in ns {
            counts.push(separated_count(Space::Fiber(sys, th), n, epsilon, None)?.count);
        }
        let bound_ok = ns
            .iter()
            .zip(&counts)
            .all(|(&n, &c)| c as f64 <= n.max(1) as f64 * (1.0 / epsilon + 1.0));
        let pts: Vec<(f64, f64)> = ns.iter().zip(&counts).map(|(&n, &c)| (n as f64, (c as f64).ln())).collect();
        let rate = if pts.len() >= 2 { least_squares(&pts).0 } else { 0.0 };
        rows.push(FiberRow {
            theta: th,
            counts,
            bound_ok,
            rate,
        });
    }
    let passed = rows.iter().all(|r| r.bound_ok && r.rate < FIBER_RATE_LIMIT);
    Ok(FiberEntropyReport {
        epsilon,
        ns: ns.to_vec(),
        rows,
        passed,
    })
}
