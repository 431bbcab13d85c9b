//! Fiber (central) Lyapunov exponents: boundary quadratures, Birkhoff
//! averages, the negative-exponent hypothesis and the small-ε expansion.

use crate::error::{KanError, Result};
use crate::ruelle::GridMeasure;
use crate::series::{Poly, TrigPoly};
use crate::skew::{BaseOrbit, FiberFamily, KanSystem, SliceTape};
use crate::torus::ExpandingCircleMap;
use serde::{Deserialize, Serialize};

pub const BATCHES: usize = 20;
pub const MIN_BIRKHOFF_STEPS: usize = 10_000;
/// Exponents must clear this multiple of the quadrature resolution error.
pub const MARGIN_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    Birkhoff,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentReport {
    pub lambda0: f64,
    pub lambda1: f64,
    pub measure: String,
    pub method: Method,
    pub size: usize,
    /// Batch-means standard error (Birkhoff only).
    pub standard_error: Option<f64>,
    /// `|value(G) − value(G/2)|`, the larger of the two boundaries.
    pub resolution_error: Option<f64>,
    pub passed: bool,
}

/// `∫ log|∂_t φ(θ, j)| dν(θ)` by the midpoint rule on the grid of `measure`.
pub fn boundary_exponent(sys: &KanSystem, j: u8, measure: &GridMeasure) -> Result<f64> {
    if j > 1 {
        return Err(KanError::InvalidParameter(format!("boundary index must be 0 or 1, got {j}")));
    }
    let t = j as f64;
    let mut acc = 0.0;
    for (i, &w) in measure.weights().iter().enumerate() {
        let th = measure.node(i);
        let d = sys.fiber().dt(th, t).abs();
        if d == 0.0 {
            return Err(KanError::ZeroDerivative { theta: th, t });
        }
        acc += w * d.ln();
    }
    Ok(acc)
}

/// Merge neighbouring cells pairwise (grid `G` to `G/2`).
pub fn coarsen(measure: &GridMeasure) -> Result<GridMeasure> {
    let w = measure.weights();
    if w.len() % 2 != 0 || w.len() < 2 {
        return Err(KanError::InvalidParameter("grid must be even to coarsen".into()));
    }
    GridMeasure::from_weights(w.chunks(2).map(|c| c[0] + c[1]).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirkhoffEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub steps: usize,
    pub burn_in: usize,
}

/// `(1/N) Σ log|∂_t φ(K^j(θ₀, t₀))|` after `burn_in` steps along the floating base orbit.
pub fn birkhoff_central_exponent(
    sys: &KanSystem,
    start: (f64, f64),
    steps: usize,
    burn_in: usize,
) -> Result<BirkhoffEstimate> {
    birkhoff_on_orbit(sys, &BaseOrbit::Float(start.0), start.1, steps, burn_in)
}

pub fn birkhoff_on_orbit(
    sys: &KanSystem,
    orbit: &BaseOrbit,
    t0: f64,
    steps: usize,
    burn_in: usize,
) -> Result<BirkhoffEstimate> {
    if steps < MIN_BIRKHOFF_STEPS {
        return Err(KanError::InvalidParameter(format!(
            "Birkhoff sums need at least {MIN_BIRKHOFF_STEPS} steps, got {steps}"
        )));
    }
    let mut tape = SliceTape::new(sys, orbit);
    tape.reserve_steps(burn_in + steps);
    let mut t = t0;
    for j in 0..burn_in {
        t = tape.at(j).value(t);
    }
    let batch = steps / BATCHES;
    let mut batch_sums = vec![0.0; BATCHES];
    let mut total = 0.0;
    for i in 0..steps {
        let s = tape.at(burn_in + i);
        let d = s.dt(t).abs();
        if d == 0.0 {
            return Err(KanError::ZeroDerivative { theta: s.theta(), t });
        }
        let l = d.ln();
        total += l;
        batch_sums[(i / batch).min(BATCHES - 1)] += l;
        t = s.value(t);
    }
    let estimate = total / steps as f64;
    let means: Vec<f64> = batch_sums
        .iter()
        .enumerate()
        .map(|(b, s)| {
            let len = if b == BATCHES - 1 { steps - batch * (BATCHES - 1) } else { batch };
            s / len as f64
        })
        .collect();
    let mu = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(BirkhoffEstimate {
        estimate,
        standard_error: (var / BATCHES as f64).sqrt(),
        steps,
        burn_in,
    })
}

/// Both boundary exponents against `measure`, with a margin of
/// [`MARGIN_FACTOR`] times the grid-halving error.
pub fn check_negative_exponents(
    sys: &KanSystem,
    measure: &GridMeasure,
    label: &str,
) -> Result<ExponentReport> {
    let l0 = boundary_exponent(sys, 0, measure)?;
    let l1 = boundary_exponent(sys, 1, measure)?;
    let coarse = coarsen(measure)?;
    let err = (boundary_exponent(sys, 0, &coarse)? - l0)
        .abs()
        .max((boundary_exponent(sys, 1, &coarse)? - l1).abs());
    let margin = MARGIN_FACTOR * err;
    Ok(ExponentReport {
        lambda0: l0,
        lambda1: l1,
        measure: label.to_string(),
        method: Method::Quadrature,
        size: measure.grid(),
        standard_error: None,
        resolution_error: Some(err),
        passed: l0 < -margin && l1 < -margin,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

/// Fit `λ_j(ε) = −β·ε^γ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerFit {
    pub gamma: f64,
    pub beta: f64,
    /// `½ ∫ (∂_t ψ(θ, j))² dν`
    pub beta_target: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// `∫ C dν`; the expansion needs it to vanish.
    pub coupling_mean: f64,
    pub mean_condition: bool,
    pub fit0: PowerFit,
    pub fit1: PowerFit,
    pub passed: bool,
}

pub const GAMMA_TARGET: f64 = 2.0;
pub const GAMMA_TOL: f64 = 0.1;
pub const BETA_REL_TOL: f64 = 0.05;

/// Boundary exponents of `t + ε·C(θ)·ξ(t)` over `base` for each `ε`, and the
/// quadratic-law fit over the nonzero entries.
pub fn epsilon_expansion_scan(
    base: &ExpandingCircleMap,
    coupling: &TrigPoly,
    profile: &Poly,
    measure: &GridMeasure,
    epsilons: &[f64],
) -> Result<ScanReport> {
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let sys = KanSystem::new(
            base.clone(),
            FiberFamily::Separable {
                epsilon: eps,
                coupling: coupling.clone(),
                profile: profile.clone(),
            },
        )?;
        rows.push(ScanRow {
            epsilon: eps,
            lambda0: boundary_exponent(&sys, 0, measure)?,
            lambda1: boundary_exponent(&sys, 1, measure)?,
        });
    }
    let coupling_mean = measure.integrate(|th| coupling.eval(th));
    let target = |j: f64| {
        let dxi = profile.derivative(j);
        0.5 * measure.integrate(|th| (coupling.eval(th) * dxi).powi(2))
    };
    let fit0 = power_fit(rows.iter().map(|r| (r.epsilon, r.lambda0)), target(0.0));
    let fit1 = power_fit(rows.iter().map(|r| (r.epsilon, r.lambda1)), target(1.0));
    Ok(ScanReport {
        passed: fit0.passed && fit1.passed,
        mean_condition: coupling_mean.abs() <= 1e-10,
        coupling_mean,
        fit0,
        fit1,
        rows,
    })
}

fn power_fit(points: impl Iterator<Item = (f64, f64)>, beta_target: f64) -> PowerFit {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(e, l)| e > 0.0 && l != 0.0)
        .map(|(e, l)| (e.ln(), l.abs().ln()))
        .collect();
    let (gamma, log_beta) = least_squares(&pts);
    let beta = log_beta.exp();
    let passed = pts.len() >= 2
        && (gamma - GAMMA_TARGET).abs() <= GAMMA_TOL
        && (beta - beta_target).abs() <= BETA_REL_TOL * beta_target;
    PowerFit {
        gamma,
        beta,
        beta_target,
        passed,
    }
}

/// Slope and intercept of the ordinary least-squares line.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `log((1 + √(1 − a²))/2) = ∫₀¹ log(1 + a·cos 2πθ) dθ`, `|a| < 1`.
pub fn log_cosine_mean(a: f64) -> f64 {
    ((1.0 + (1.0 - a * a).sqrt()) / 2.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::ExpandingCircleMap;
    use std::f64::consts::TAU;

    /// 10^7-point midpoint quadrature, summed in chunks.
    fn brute_log_cosine_mean(a: f64) -> f64 {
        let n = 10_000_000usize;
        let mut total = 0.0;
        for chunk in (0..n).collect::<Vec<_>>().chunks(100_000) {
            let s: f64 = chunk
                .iter()
                .map(|&i| (a * (TAU * (i as f64 + 0.5) / n as f64).cos()).ln_1p())
                .sum();
            total += s;
        }
        total / n as f64
    }

    #[test]
    fn closed_form_verified_by_quadrature() {
        let a = 1.0 / 32.0;
        let closed = log_cosine_mean(a);
        assert!((closed - brute_log_cosine_mean(a)).abs() < 1e-15);
        assert!((closed - -2.4423008050464316e-4).abs() < 1e-18);
    }

    #[test]
    fn kan_boundary_exponents() {
        let k = KanSystem::kan1994();
        let leb = GridMeasure::lebesgue(1 << 14);
        let expect = log_cosine_mean(1.0 / 32.0);
        let l0 = boundary_exponent(&k, 0, &leb).unwrap();
        let l1 = boundary_exponent(&k, 1, &leb).unwrap();
        assert!((l0 - expect).abs() < 1e-9);
        assert!((l1 - expect).abs() < 1e-9);
        assert!((l0 - l1).abs() < 1e-12);
        assert!((l0 - -2.4425e-4).abs() < 1e-7);
        assert!(boundary_exponent(&k, 2, &leb).is_err());
    }

    #[test]
    fn flat_family_has_zero_exponents() {
        let flat = KanSystem::kan_family(0.0).unwrap();
        let leb = GridMeasure::lebesgue(1 << 10);
        assert_eq!(boundary_exponent(&flat, 0, &leb).unwrap(), 0.0);
        let r = check_negative_exponents(&flat, &leb, "lebesgue").unwrap();
        assert!(!r.passed);
        let b = birkhoff_central_exponent(&flat, (0.3, 0.4), 10_000, 0).unwrap();
        assert_eq!(b.estimate, 0.0);
    }

    #[test]
    fn singular_derivative_is_an_error() {
        // 1 + 1·cos(2πθ)·(1 − 2t) vanishes at θ = ½, t = 0.
        let sys = KanSystem::new(ExpandingCircleMap::linear(3).unwrap(), FiberFamily::kan_family(1.0))
            .unwrap();
        let r = boundary_exponent(&sys, 0, &GridMeasure::lebesgue(1));
        assert!(matches!(r, Err(KanError::ZeroDerivative { .. })));
    }

    #[test]
    fn negative_exponent_check() {
        let k = KanSystem::kan1994();
        let r = check_negative_exponents(&k, &GridMeasure::lebesgue(1 << 14), "lebesgue").unwrap();
        assert!(r.passed);
        assert!(r.resolution_error.unwrap() < 1e-15);

        let shifted = KanSystem::new(
            ExpandingCircleMap::linear(3).unwrap(),
            FiberFamily::Separable {
                epsilon: 1.0 / 32.0,
                coupling: TrigPoly::new(vec![1.0, 1.0], vec![]),
                profile: Poly::logistic(),
            },
        )
        .unwrap();
        let r = check_negative_exponents(&shifted, &GridMeasure::lebesgue(1 << 12), "lebesgue")
            .unwrap();
        assert!(r.lambda0 > 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        // A kinked density makes the midpoint error visible.
        let sys = KanSystem::kan_family(0.3).unwrap();
        let val = |g: usize| {
            let m = GridMeasure::from_weights(
                (0..g).map(|i| 0.1 + ((i as f64 + 0.5) / g as f64 - 1.0 / 3.0).abs()).collect(),
            )
            .unwrap();
            boundary_exponent(&sys, 0, &m).unwrap()
        };
        let reference = val(1 << 16);
        let e10 = (val(1 << 10) - reference).abs();
        let e12 = (val(1 << 12) - reference).abs();
        assert!(e10 < 1e-5, "{e10}");
        assert!(e12 < e10 / 4.0, "{e10} {e12}");
    }

    #[test]
    fn birkhoff_near_bottom_boundary() {
        let k = KanSystem::kan1994();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let b = birkhoff_central_exponent(&k, (golden, 1e-9), 1_000_000, 0).unwrap();
        let q = log_cosine_mean(1.0 / 32.0);
        assert!(
            (b.estimate - q).abs() < 3.0 * b.standard_error,
            "{} ± {} vs {}",
            b.estimate,
            b.standard_error,
            q
        );
        assert!(birkhoff_central_exponent(&k, (golden, 0.5), 100, 0).is_err());
    }

    #[test]
    fn birkhoff_on_cycle_is_exact() {
        let k = KanSystem::kan1994();
        let cycle = vec![1.0 / 8.0, 3.0 / 8.0];
        let comp = k.fiber_composition_along(&cycle);
        // Fixed point of the two-step return map, found by bisection.
        let (roots, _) = comp.interior_fixed_points(1 << 12);
        let t = roots[0];
        let b = birkhoff_on_orbit(&k, &BaseOrbit::Cycle(cycle.clone()), t, 20_000, 0).unwrap();
        let exact = comp.derivative(t).ln() / 2.0;
        assert!((b.estimate - exact).abs() < 1e-12, "{} vs {}", b.estimate, exact);
    }

    #[test]
    fn epsilon_expansion_for_kan_family() {
        let base = ExpandingCircleMap::linear(3).unwrap();
        let leb = GridMeasure::lebesgue(1 << 14);
        let eps: Vec<f64> = (0..5).map(|k| (1.0 / 32.0) / 2f64.powi(k)).collect();
        let r = epsilon_expansion_scan(&base, &TrigPoly::cosine(1, 1.0), &Poly::logistic(), &leb, &eps)
            .unwrap();
        assert!(r.mean_condition);
        assert!(r.passed);
        assert!((r.fit0.gamma - 2.0).abs() <= 0.1);
        assert!((0.2375..=0.2625).contains(&r.fit0.beta));
        assert!((r.fit0.beta_target - 0.25).abs() < 1e-12);
        let e = 1.0 / 32.0;
        assert!((r.rows[0].lambda0 + e * e / 4.0).abs() < e.powi(3));

        let zero = epsilon_expansion_scan(&base, &TrigPoly::cosine(1, 1.0), &Poly::logistic(), &leb, &[0.0])
            .unwrap();
        assert_eq!(zero.rows[0].lambda0, 0.0);
        assert!(!zero.passed);
    }

    #[test]
    fn scan_reports_mean_violation() {
        let base = ExpandingCircleMap::linear(3).unwrap();
        let r = epsilon_expansion_scan(
            &base,
            &TrigPoly::new(vec![1.0, 1.0], vec![]),
            &Poly::logistic(),
            &GridMeasure::lebesgue(1 << 10),
            &[0.01, 0.005],
        )
        .unwrap();
        assert!(!r.mean_condition);
        assert!(!r.passed);
    }
}
