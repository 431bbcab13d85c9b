//! Expanding maps of the circle `E(θ) = k·θ + a·u(θ) mod 1`.

use crate::error::{KanError, Result};
use crate::series::TrigPoly;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const NEWTON_TOL: f64 = 1e-13;
pub const NEWTON_MAX_ITER: usize = 60;
/// Residual accepted for a preimage, in circle distance.
pub const BRANCH_TOL: f64 = 1e-12;

/// Reduce to `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(1.0 - d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandingCircleMap {
    degree: i64,
    perturbation: TrigPoly,
    amplitude: f64,
    lambda: f64,
}

/// Result of the expansivity check on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandingReport {
    pub grid: usize,
    pub min_abs_derivative: f64,
    pub argmin: f64,
    pub lambda: f64,
    /// Smallest gap between neighbouring preimages (an injectivity-radius proxy).
    pub branch_separation: f64,
    pub passed: bool,
    pub violation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u128,
    pub den: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub angle: f64,
    /// Minimal period.
    pub period: usize,
    pub orbit: Vec<f64>,
    /// `(E^period)'` along the orbit.
    pub multiplier: f64,
    /// Exact value `num/den` when the base map is linear.
    pub exact: Option<Rational>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicPointSet {
    pub n: usize,
    /// `#Fix(E^n) = |k^n − 1|`.
    pub fixed_count: u128,
    /// One representative per orbit, drawn from the stride-sampled seeds.
    pub points: Vec<PeriodicPoint>,
    pub seeds: usize,
    pub refinement_failures: usize,
}

impl PeriodicPointSet {
    /// `(1/n)·log #Fix(E^n)`
    pub fn growth_rate(&self) -> f64 {
        (self.fixed_count as f64).ln() / self.n as f64
    }
}

impl ExpandingCircleMap {
    pub fn new(degree: i64, perturbation: TrigPoly, amplitude: f64) -> Result<Self> {
        if degree.abs() < 2 {
            return Err(KanError::InvalidParameter(format!(
                "degree must satisfy |k| >= 2, got {degree}"
            )));
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(KanError::InvalidParameter(format!(
                "perturbation amplitude must be finite and >= 0, got {amplitude}"
            )));
        }
        let mut map = Self {
            degree,
            perturbation,
            amplitude,
            lambda: 0.0,
        };
        map.lambda = map.min_abs_derivative(1 << 12).0;
        Ok(map)
    }

    pub fn linear(degree: i64) -> Result<Self> {
        Self::new(degree, TrigPoly::zero(), 0.0)
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn perturbation(&self) -> &TrigPoly {
        &self.perturbation
    }

    /// Cached `min |E'|` over a 2^12 grid.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_linear(&self) -> bool {
        self.amplitude == 0.0 || self.perturbation.is_zero()
    }

    /// Lift `Ê(x) = k·x + a·u(x)`, with `Ê(x + 1) = Ê(x) + k`.
    #[inline]
    pub fn lift(&self, x: f64) -> f64 {
        if self.is_linear() {
            self.degree as f64 * x
        } else {
            self.degree as f64 * x + self.amplitude * self.perturbation.eval(x)
        }
    }

    #[inline]
    pub fn evaluate(&self, theta: f64) -> f64 {
        wrap(self.lift(theta))
    }

    #[inline]
    pub fn derivative(&self, theta: f64) -> f64 {
        if self.is_linear() {
            self.degree as f64
        } else {
            self.degree as f64 + self.amplitude * self.perturbation.derivative(theta)
        }
    }

    pub fn max_abs_derivative(&self, grid: usize) -> f64 {
        (0..grid)
            .map(|i| self.derivative(i as f64 / grid as f64).abs())
            .fold(0.0, f64::max)
    }

    fn min_abs_derivative(&self, grid: usize) -> (f64, f64) {
        (0..grid)
            .map(|i| {
                let th = i as f64 / grid as f64;
                (self.derivative(th).abs(), th)
            })
            .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
    }

    /// The `|k|` preimages of `theta`, sorted ascending in `[0, 1)`.
    pub fn inverse_branches(&self, theta: f64) -> Result<Vec<f64>> {
        let k = self.degree;
        let kf = k as f64;
        let theta = wrap(theta);
        if self.is_linear() {
            // Solve k·y = theta + m for y in [0, 1).
            let mut out: Vec<f64> = (0..k.abs())
                .map(|i| {
                    let m = if k > 0 { i } else { -i };
                    wrap((theta + m as f64) / kf)
                })
                .collect();
            out.sort_by(f64::total_cmp);
            return Ok(out);
        }
        let l0 = self.lift(0.0);
        let (lo, hi) = if k > 0 { (l0, l0 + kf) } else { (l0 + kf, l0) };
        let first = (lo - theta).ceil() as i64;
        let mut out = Vec::with_capacity(k.unsigned_abs() as usize);
        for (branch, m) in (first..).take(k.unsigned_abs() as usize).enumerate() {
            let target = theta + m as f64;
            debug_assert!(target >= lo - 1e-9 && target <= hi + 1e-9);
            let y = self.solve_lift(target, branch)?;
            out.push(wrap(y));
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Solve `Ê(y) = target` for `y ∈ [0, 1]`; Newton from the linear seed, bisection fallback.
    fn solve_lift(&self, target: f64, branch: usize) -> Result<f64> {
        let kf = self.degree as f64;
        let increasing = self.degree > 0;
        let mut y = ((target - self.lift(0.0)) / kf).clamp(0.0, 1.0);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let f = self.lift(y) - target;
            let step = f / self.derivative(y);
            y -= step;
            if !(0.0..=1.0).contains(&y) || !y.is_finite() {
                break;
            }
            if step.abs() < NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            let (mut a, mut b) = (0.0_f64, 1.0_f64);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let below = self.lift(mid) < target;
                if below == increasing {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a < NEWTON_TOL {
                    break;
                }
            }
            y = 0.5 * (a + b);
        }
        let residual = circle_dist(self.evaluate(y), wrap(target));
        if residual > BRANCH_TOL {
            return Err(KanError::BranchNonConvergence {
                branch,
                target,
                residual,
            });
        }
        Ok(y)
    }

    /// Derivative of `E^n` at `theta`, as the product of pointwise derivatives.
    pub fn iterate_derivative(&self, theta: f64, n: usize) -> f64 {
        let mut th = theta;
        let mut d = 1.0;
        for _ in 0..n {
            d *= self.derivative(th);
            th = self.evaluate(th);
        }
        d
    }

    pub fn verify_expanding(&self, grid: usize) -> Result<ExpandingReport> {
        if grid < 1 << 10 {
            return Err(KanError::InvalidParameter(format!(
                "verification grid must be >= 2^10, got {grid}"
            )));
        }
        let (min_d, argmin) = self.min_abs_derivative(grid);
        let passed = min_d > 1.0;
        let branch_separation = if passed {
            self.branch_separation(256)?
        } else {
            0.0
        };
        Ok(ExpandingReport {
            grid,
            min_abs_derivative: min_d,
            argmin,
            lambda: min_d,
            branch_separation,
            passed,
            violation: (!passed).then_some(argmin),
        })
    }

    fn branch_separation(&self, grid: usize) -> Result<f64> {
        let mut best = f64::INFINITY;
        for i in 0..grid {
            let pre = self.inverse_branches(i as f64 / grid as f64)?;
            for w in 0..pre.len() {
                let next = if w + 1 < pre.len() { pre[w + 1] } else { pre[0] + 1.0 };
                best = best.min(next - pre[w]);
            }
        }
        Ok(best)
    }

    /// Points of `Fix(E^n)`, sampled by uniform stride down to at most `cap`
    /// seeds and reduced to one representative per orbit.
    pub fn periodic_points(&self, n: usize, cap: usize) -> Result<PeriodicPointSet> {
        if n == 0 {
            return Err(KanError::InvalidParameter("period must be >= 1".into()));
        }
        if cap == 0 {
            return Err(KanError::InvalidParameter("cap must be >= 1".into()));
        }
        let k = self.degree as i128;
        let kn = k
            .checked_pow(n as u32)
            .filter(|v| v.unsigned_abs() < (1u128 << 100))
            .ok_or_else(|| KanError::InvalidParameter(format!("|k|^n too large for n = {n}")))?;
        let modulus = (kn - 1).unsigned_abs();
        let seeds: Vec<u128> = if modulus <= cap as u128 {
            (0..modulus).collect()
        } else {
            (0..cap as u128).map(|i| i * modulus / cap as u128).collect()
        };
        let mut set = PeriodicPointSet {
            n,
            fixed_count: modulus,
            points: Vec::new(),
            seeds: seeds.len(),
            refinement_failures: 0,
        };
        if self.is_linear() {
            let mut reps = BTreeMap::new();
            for &j in &seeds {
                let orbit = rational_orbit(j, k, modulus);
                let rep = *orbit.iter().min().expect("nonempty orbit");
                reps.entry(rep).or_insert(());
            }
            for (&rep, _) in &reps {
                let orbit = rational_orbit(rep, k, modulus);
                let p = orbit.len();
                set.points.push(PeriodicPoint {
                    angle: rep as f64 / modulus as f64,
                    period: p,
                    orbit: orbit.iter().map(|&j| j as f64 / modulus as f64).collect(),
                    multiplier: (self.degree as f64).powi(p as i32),
                    exact: Some(Rational {
                        num: rep,
                        den: modulus,
                    }),
                });
            }
            return Ok(set);
        }
        let mut reps: BTreeMap<u64, PeriodicPoint> = BTreeMap::new();
        for &j in &seeds {
            match self.refine_periodic(j, modulus, n) {
                Some(theta) => {
                    let Some(point) = self.orbit_of(theta, n) else {
                        set.refinement_failures += 1;
                        continue;
                    };
                    let key = (point.angle * 1e9).round() as u64;
                    reps.entry(key).or_insert(point);
                }
                None => set.refinement_failures += 1,
            }
        }
        set.points = reps.into_values().collect();
        Ok(set)
    }

    /// Newton on the lift equation `Ê^n(θ) − θ − m = 0`, seeded at `j/M`.
    fn refine_periodic(&self, j: u128, modulus: u128, n: usize) -> Option<f64> {
        let seed = j as f64 / modulus as f64;
        let sign = if self.degree > 0 || n % 2 == 0 { 1.0 } else { -1.0 };
        // For the linear map (k^n − 1)·θ = j·sign exactly.
        let m = sign * j as f64;
        let residual = |x: f64| {
            let mut y = x;
            let mut d = 1.0;
            for _ in 0..n {
                d *= self.derivative(y);
                y = self.lift(y);
            }
            (y - x - m, d - 1.0)
        };
        let mut x = seed;
        for _ in 0..NEWTON_MAX_ITER {
            let (f, df) = residual(x);
            if !f.is_finite() || df == 0.0 {
                return None;
            }
            let step = f / df;
            x -= step;
            if step.abs() < NEWTON_TOL {
                let th = wrap(x);
                let back = (0..n).fold(th, |y, _| self.evaluate(y));
                return (circle_dist(back, th) < 1e-10).then_some(th);
            }
        }
        None
    }

    fn orbit_of(&self, theta: f64, n: usize) -> Option<PeriodicPoint> {
        let mut orbit = vec![theta];
        let mut y = theta;
        let mut mult = 1.0;
        for i in 1..=n {
            mult *= self.derivative(y);
            y = self.evaluate(y);
            if circle_dist(y, theta) < 1e-10 {
                if n % i != 0 {
                    return None;
                }
                let angle = orbit.iter().copied().fold(f64::INFINITY, f64::min);
                return Some(PeriodicPoint {
                    angle,
                    period: i,
                    orbit: rotate_to_min(orbit),
                    multiplier: mult,
                    exact: None,
                });
            }
            orbit.push(y);
        }
        None
    }
}

fn rotate_to_min(mut orbit: Vec<f64>) -> Vec<f64> {
    let idx = orbit
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    orbit.rotate_left(idx);
    orbit
}

/// Orbit of `j/M` under `θ ↦ kθ mod 1`, starting at `j`.
fn rational_orbit(j: u128, k: i128, modulus: u128) -> Vec<u128> {
    if modulus == 0 {
        return vec![0];
    }
    let m = modulus as i128;
    let mut out = vec![j];
    let mut x = ((j as i128 * k).rem_euclid(m)) as u128;
    while x != j {
        out.push(x);
        x = ((x as i128 * k).rem_euclid(m)) as u128;
    }
    out
}
