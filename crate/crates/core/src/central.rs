//! The separating graph σ, interior periodic orbits and the central measure.

use crate::basins::{classify_on_tape, ClassifyParams, Label};
use crate::error::{KanError, Result};
use crate::pool;
use crate::ruelle::GridMeasure;
use crate::skew::{BaseOrbit, KanSystem, SliceTape, FIXED_SCAN_CELLS};
use crate::torus::circle_dist;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

pub const SIGMA_TOL: f64 = 1e-4;
pub const SIGMA_N_MAX: usize = 1_000_000;
pub const EXTENSION_FACTOR: usize = 4;
pub const FIXED_POINT_RESIDUAL: f64 = 1e-12;
pub const MAX_EXCLUDED_MASS: f64 = 0.01;
pub const COVERAGE_COLS: usize = 32;
pub const COVERAGE_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaParams {
    pub classify: ClassifyParams,
    pub tol: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        Self {
            classify: ClassifyParams {
                n_max: SIGMA_N_MAX,
                ..Default::default()
            },
            tol: SIGMA_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMethod {
    Bisection,
    PeriodicFixedPoint,
    Undecided,
}

impl SigmaMethod {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Bisection => "bisection",
            Self::PeriodicFixedPoint => "periodic-fixed-point",
            Self::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSample {
    pub theta: f64,
    pub sigma: Option<f64>,
    pub method: SigmaMethod,
}

/// Label with one ×[`EXTENSION_FACTOR`] retry when the first run is undecided.
fn probe(tape: &mut SliceTape<'_>, t: f64, params: &ClassifyParams) -> Label {
    let first = classify_on_tape(tape, t, params).label;
    if first.is_decided() {
        return first;
    }
    let longer = ClassifyParams {
        n_max: params.n_max * EXTENSION_FACTOR,
        ..*params
    };
    classify_on_tape(tape, t, &longer).label
}

/// Bisect the basin boundary on the fiber over `orbit` to `params.tol`.
///
/// Errors when the fiber ends are not labelled BASIN0 at `δ` and BASIN1 at `1 − δ`.
/// An undecided interior probe yields a sample with `sigma = None`.
pub fn sigma_bisect(sys: &KanSystem, orbit: &BaseOrbit, params: &SigmaParams) -> Result<SigmaSample> {
    params.classify.validate()?;
    let mut tape = SliceTape::new(sys, orbit);
    let theta = tape.theta_at(0);
    let delta = params.classify.delta;
    let bottom = probe(&mut tape, delta, &params.classify);
    let top = probe(&mut tape, 1.0 - delta, &params.classify);
    if bottom != Label::Basin0 || top != Label::Basin1 {
        return Err(KanError::Undecided(format!(
            "fiber ends at theta = {theta} classify as {bottom:?}/{top:?}"
        )));
    }
    let (mut lo, mut hi) = (delta, 1.0 - delta);
    while hi - lo > params.tol {
        let mid = 0.5 * (lo + hi);
        match probe(&mut tape, mid, &params.classify) {
            Label::Basin0 => lo = mid,
            Label::Basin1 => hi = mid,
            Label::Undecided => {
                return Ok(SigmaSample {
                    theta,
                    sigma: None,
                    method: SigmaMethod::Undecided,
                })
            }
        }
    }
    Ok(SigmaSample {
        theta,
        sigma: Some(0.5 * (lo + hi)),
        method: SigmaMethod::Bisection,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparatingGraph {
    pub grid: usize,
    pub tol: f64,
    pub samples: Vec<SigmaSample>,
}

impl SeparatingGraph {
    /// σ at the cell centres `(i + ½)/grid`.
    pub fn compute(sys: &KanSystem, grid: usize, params: &SigmaParams, workers: usize) -> Result<Self> {
        if grid == 0 {
            return Err(KanError::InvalidParameter("empty sigma grid".into()));
        }
        let samples: Vec<SigmaSample> = pool::install(workers, || {
            (0..grid)
                .into_par_iter()
                .map(|i| {
                    let theta = (i as f64 + 0.5) / grid as f64;
                    sigma_bisect(sys, &BaseOrbit::Float(theta), params).unwrap_or(SigmaSample {
                        theta,
                        sigma: None,
                        method: SigmaMethod::Undecided,
                    })
                })
                .collect()
        });
        if samples.iter().all(|s| s.sigma.is_none()) {
            return Err(KanError::Undecided("no sigma sample was decided".into()));
        }
        Ok(Self {
            grid,
            tol: params.tol,
            samples,
        })
    }

    pub fn decided(&self) -> usize {
        self.samples.iter().filter(|s| s.sigma.is_some()).count()
    }

    pub fn mean(&self) -> f64 {
        let v: Vec<f64> = self.samples.iter().filter_map(|s| s.sigma).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// `(pairs with both sides decided, pairs with σ(θ) + σ(θ + ½) = 1 within 2·tol)`.
    pub fn involution_pairs(&self) -> (usize, usize) {
        let half = self.grid / 2;
        let mut decided = 0;
        let mut agree = 0;
        for i in 0..half {
            if let (Some(a), Some(b)) = (self.samples[i].sigma, self.samples[i + half].sigma) {
                decided += 1;
                agree += usize::from((a + b - 1.0).abs() <= 2.0 * self.tol);
            }
        }
        (decided, agree)
    }

    /// `Σ |σ_{i+1} − σ_i|` over consecutive decided samples, wrapping around.
    pub fn total_variation(&self) -> f64 {
        let v: Vec<f64> = self.samples.iter().filter_map(|s| s.sigma).collect();
        if v.len() < 2 {
            return 0.0;
        }
        (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).abs()).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,sigma,method\n");
        for s in &self.samples {
            let sigma = s.sigma.map_or_else(|| "nan".to_string(), crate::output::fmt_f64);
            let _ = writeln!(out, "{},{},{}", crate::output::fmt_f64(s.theta), sigma, s.method.tag());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteriorPeriodicOrbit {
    pub theta: f64,
    pub period: usize,
    pub t: f64,
    /// `|(φⁿ_θ)'(t)|`
    pub multiplier: f64,
    pub boundary_multipliers: [f64; 2],
    pub residual: f64,
    /// Other repelling interior fixed points on the same fiber.
    pub alternates: Vec<f64>,
    /// Bisection estimate used to choose among several fixed points, if computed.
    pub sigma: Option<f64>,
    /// `(θ_i, t_i)` for `i < period`.
    pub points: Vec<(f64, f64)>,
}

impl InteriorPeriodicOrbit {
    pub fn central_exponent(&self) -> f64 {
        self.multiplier.ln() / self.period as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitReport {
    pub n: usize,
    pub base_orbits: usize,
    /// Base orbits whose boundary multipliers are not both below 1.
    pub skipped: usize,
    pub orbits: Vec<InteriorPeriodicOrbit>,
}

/// Interior fixed points of `φⁿ_θ` over base orbits of minimal period `n`.
///
/// With several repelling fixed points on one fiber, the one closest to the
/// bisected σ is kept when `sigma` is given, otherwise the lowest.
pub fn interior_periodic_orbits(
    sys: &KanSystem,
    n: usize,
    cap: usize,
    sigma: Option<&SigmaParams>,
) -> Result<OrbitReport> {
    let base = sys.base().periodic_points(n, cap)?;
    let found: Vec<Option<InteriorPeriodicOrbit>> = base
        .points
        .par_iter()
        .filter(|pp| pp.period == n)
        .map(|pp| interior_orbit_over(sys, &pp.orbit, sigma))
        .collect::<Result<_>>()?;
    let skipped = found.iter().filter(|o| o.is_none()).count();
    Ok(OrbitReport {
        n,
        base_orbits: found.len(),
        skipped,
        orbits: found.into_iter().flatten().collect(),
    })
}

/// `None` when the boundary-multiplier hypothesis fails on this cycle.
pub fn interior_orbit_over(
    sys: &KanSystem,
    cycle: &[f64],
    sigma: Option<&SigmaParams>,
) -> Result<Option<InteriorPeriodicOrbit>> {
    let comp = sys.fiber_composition_along(cycle);
    let b0 = comp.derivative(0.0).abs();
    let b1 = comp.derivative(1.0).abs();
    if !(b0 < 1.0 && b1 < 1.0) {
        return Ok(None);
    }
    let (roots, _) = comp.interior_fixed_points(FIXED_SCAN_CELLS);
    let repelling: Vec<(f64, f64)> = roots
        .into_iter()
        .map(|t| (t, comp.derivative(t).abs()))
        .filter(|&(_, d)| d >= 1.0)
        .collect();
    if repelling.is_empty() {
        return Err(KanError::Consistency(format!(
            "no repelling interior fixed point over theta = {} although both boundaries attract",
            cycle[0]
        )));
    }
    let mut sigma_est = None;
    let chosen = if repelling.len() > 1 {
        if let Some(p) = sigma {
            let s = sigma_bisect(sys, &BaseOrbit::Cycle(cycle.to_vec()), p)?.sigma;
            sigma_est = s;
            match s {
                Some(s) => repelling
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 .0 - s).abs().total_cmp(&(b.1 .0 - s).abs()))
                    .map_or(0, |x| x.0),
                None => 0,
            }
        } else {
            0
        }
    } else {
        0
    };
    let (t, multiplier) = repelling[chosen];
    let residual = (comp.value(t) - t).abs();
    if residual >= FIXED_POINT_RESIDUAL {
        return Err(KanError::Consistency(format!(
            "fixed point residual {residual:e} over theta = {}",
            cycle[0]
        )));
    }
    let ts = comp.orbit(t);
    Ok(Some(InteriorPeriodicOrbit {
        theta: cycle[0],
        period: cycle.len(),
        t,
        multiplier,
        boundary_multipliers: [b0, b1],
        residual,
        alternates: repelling
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != chosen)
            .map(|(_, r)| r.0)
            .collect(),
        sigma: sigma_est,
        points: cycle.iter().copied().zip(ts).collect(),
    }))
}

/// `trig(2π·mode·θ)·t^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub mode: u32,
    pub sine: bool,
    pub degree: u32,
}

impl Observable {
    pub fn eval(&self, theta: f64, t: f64) -> f64 {
        let a = TAU * self.mode as f64 * theta;
        let trig = if self.sine { a.sin() } else { a.cos() };
        trig * t.powi(self.degree as i32)
    }

    pub fn name(&self) -> String {
        format!("{}{}_t{}", if self.sine { "sin" } else { "cos" }, self.mode, self.degree)
    }

    /// Modes and degrees up to 4; sines start at mode 1.
    pub fn standard_set() -> Vec<Self> {
        let mut out = Vec::new();
        for mode in 0..=4 {
            for sine in [false, true] {
                if sine && mode == 0 {
                    continue;
                }
                for degree in 0..=4 {
                    out.push(Self { mode, sine, degree });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralEstimate {
    pub observables: Vec<Observable>,
    pub integrals: Vec<f64>,
    pub excluded_mass: f64,
}

/// `∫ Φ(θ, σ(θ)) dν` over the decided samples, renormalized by their mass.
pub fn central_measure_estimate(
    graph: &SeparatingGraph,
    measure: &GridMeasure,
    observables: &[Observable],
) -> Result<CentralEstimate> {
    if graph.grid != measure.grid() {
        return Err(KanError::InvalidParameter(format!(
            "sigma grid {} differs from measure grid {}",
            graph.grid,
            measure.grid()
        )));
    }
    let w = measure.weights();
    let excluded: f64 = graph
        .samples
        .iter()
        .zip(w)
        .filter(|(s, _)| s.sigma.is_none())
        .map(|(_, &w)| w)
        .sum();
    if excluded > MAX_EXCLUDED_MASS {
        return Err(KanError::ExcludedMass {
            excluded,
            limit: MAX_EXCLUDED_MASS,
        });
    }
    let kept = 1.0 - excluded;
    let integrals = observables
        .iter()
        .map(|o| {
            graph
                .samples
                .iter()
                .zip(w)
                .filter_map(|(s, &w)| s.sigma.map(|sg| w * o.eval(s.theta, sg)))
                .sum::<f64>()
                / kept
        })
        .collect();
    Ok(CentralEstimate {
        observables: observables.to_vec(),
        integrals,
        excluded_mass: excluded,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub orbits: usize,
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub mean_exponent: f64,
    pub min_exponent: f64,
    /// Share of the 32×16 cells visited by accepted orbits of period `≤ n`.
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of the mean gap against `n`.
    pub gap_slope: f64,
    /// Smallest `n₀` from which every listed period has a positive mean exponent.
    pub positive_from: Option<usize>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        use crate::output::fmt_f64;
        let mut out = String::from("n,orbits,mean_gap,mean_exponent,min_exponent,coverage\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.orbits,
                fmt_f64(r.mean_gap),
                fmt_f64(r.mean_exponent),
                fmt_f64(r.min_exponent),
                fmt_f64(r.coverage)
            );
        }
        out
    }
}

/// Gaps between periodic-orbit averages and the σ-pushforward, per period.
/// Periods without accepted orbits are left out.
pub fn periodic_measure_convergence(reports: &[OrbitReport], reference: &CentralEstimate) -> ConvergenceTable {
    let mut visited = vec![false; COVERAGE_COLS * COVERAGE_ROWS];
    let mut rows = Vec::new();
    let mut sorted: Vec<&OrbitReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.n);
    for rep in sorted {
        for o in &rep.orbits {
            for &(th, t) in &o.points {
                let c = ((th * COVERAGE_COLS as f64) as usize).min(COVERAGE_COLS - 1);
                let r = ((t * COVERAGE_ROWS as f64) as usize).min(COVERAGE_ROWS - 1);
                visited[r * COVERAGE_COLS + c] = true;
            }
        }
        if rep.orbits.is_empty() {
            continue;
        }
        let npts = (rep.orbits.len() * rep.n) as f64;
        let gaps: Vec<f64> = reference
            .observables
            .iter()
            .zip(&reference.integrals)
            .map(|(o, &target)| {
                let avg = rep
                    .orbits
                    .iter()
                    .flat_map(|orb| orb.points.iter())
                    .map(|&(th, t)| o.eval(th, t))
                    .sum::<f64>()
                    / npts;
                (avg - target).abs()
            })
            .collect();
        let exps: Vec<f64> = rep.orbits.iter().map(|o| o.central_exponent()).collect();
        rows.push(ConvergenceRow {
            n: rep.n,
            orbits: rep.orbits.len(),
            mean_gap: gaps.iter().sum::<f64>() / gaps.len().max(1) as f64,
            gaps,
            mean_exponent: exps.iter().sum::<f64>() / exps.len() as f64,
            min_exponent: exps.iter().copied().fold(f64::INFINITY, f64::min),
            coverage: visited.iter().filter(|&&v| v).count() as f64 / visited.len() as f64,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mean_gap)).collect();
    let gap_slope = crate::exponents::least_squares(&pts).0;
    let mut positive_from = None;
    for r in rows.iter().rev() {
        if r.mean_exponent > 0.0 {
            positive_from = Some(r.n);
        } else {
            break;
        }
    }
    ConvergenceTable {
        rows,
        gap_slope,
        positive_from,
    }
}

/// `σ` at the base point against the accepted interior fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointMatch {
    pub theta: f64,
    pub period: usize,
    pub t: f64,
    pub sigma: Option<f64>,
    pub matched: bool,
}

/// Bisected σ on the exact cycle of each accepted orbit, compared with `t_n`
/// within `max(tol, 1e-3)`.
pub fn match_sigma_to_orbits(
    sys: &KanSystem,
    orbits: &[InteriorPeriodicOrbit],
    params: &SigmaParams,
    workers: usize,
) -> Vec<FixedPointMatch> {
    let tol = params.tol.max(1e-3);
    pool::install(workers, || {
        orbits
            .par_iter()
            .map(|o| {
                let cycle: Vec<f64> = o.points.iter().map(|p| p.0).collect();
                let sigma = sigma_bisect(sys, &BaseOrbit::Cycle(cycle), params)
                    .ok()
                    .and_then(|s| s.sigma);
                FixedPointMatch {
                    theta: o.theta,
                    period: o.period,
                    t: o.t,
                    sigma,
                    matched: sigma.is_some_and(|s| (s - o.t).abs() <= tol),
                }
            })
            .collect()
    })
}

/// Circle distance between two base angles, re-exported for report code.
pub fn base_distance(a: f64, b: f64) -> f64 {
    circle_dist(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::FiberFamily;
    use crate::torus::ExpandingCircleMap;

    fn fast() -> KanSystem {
        KanSystem::kan_family(0.3).unwrap()
    }

    fn fast_params() -> SigmaParams {
        SigmaParams {
            classify: ClassifyParams {
                n_max: 20_000,
                ..Default::default()
            },
            tol: SIGMA_TOL,
        }
    }

    #[test]
    fn kan_fixed_fiber_at_zero_is_skipped() {
        let k = KanSystem::kan1994();
        let comp = k.fiber_composition_along(&[0.0]);
        assert!((comp.derivative(0.0) - (1.0 + 1.0 / 32.0)).abs() < 1e-15);
        let r = interior_periodic_orbits(&k, 1, 64, None).unwrap();
        assert_eq!(r.base_orbits, 2);
        assert_eq!(r.skipped, 2);
        assert!(r.orbits.is_empty());
    }

    #[test]
    fn period_two_orbits_match_scan_oracle() {
        let k = KanSystem::kan1994();
        let r = interior_periodic_orbits(&k, 2, 64, None).unwrap();
        // Points j/8 with minimal period 2 form three orbits.
        assert_eq!(r.base_orbits, 3);
        for j in 1..8 {
            let th = j as f64 / 8.0;
            let cycle = [th, (3.0 * th) % 1.0];
            if cycle[1] == th {
                continue;
            }
            let comp = k.fiber_composition_along(&cycle);
            let sinks = comp.derivative(0.0) < 1.0 && comp.derivative(1.0) < 1.0;
            // Independent dense scan for a sign change.
            let g = |t: f64| comp.value(t) - t;
            let crossing = (1..100_000).any(|i| {
                let (a, b) = (g(i as f64 / 100_000.0), g((i + 1) as f64 / 100_000.0));
                a * b < 0.0
            });
            if sinks {
                assert!(crossing);
                let o = interior_orbit_over(&k, &cycle, None).unwrap().unwrap();
                assert!(o.multiplier >= 1.0);
                assert!(o.residual < FIXED_POINT_RESIDUAL);
            } else {
                assert!(interior_orbit_over(&k, &cycle, None).unwrap().is_none());
            }
        }
        for o in &r.orbits {
            assert!(o.multiplier >= 1.0 && o.central_exponent() >= 0.0);
            assert!(o.boundary_multipliers.iter().all(|&b| b < 1.0));
        }
    }

    #[test]
    fn neutral_family_has_no_orbits_and_no_sigma() {
        let flat = KanSystem::kan_family(0.0).unwrap();
        for n in 1..=4 {
            assert!(interior_periodic_orbits(&flat, n, 256, None).unwrap().orbits.is_empty());
        }
        let p = SigmaParams {
            classify: ClassifyParams {
                n_max: 1000,
                ..Default::default()
            },
            tol: SIGMA_TOL,
        };
        assert!(matches!(
            sigma_bisect(&flat, &BaseOrbit::Float(0.3), &p),
            Err(KanError::Undecided(_))
        ));
        let empty = periodic_measure_convergence(
            &[interior_periodic_orbits(&flat, 2, 64, None).unwrap()],
            &CentralEstimate {
                observables: vec![],
                integrals: vec![],
                excluded_mass: 0.0,
            },
        );
        assert!(empty.rows.is_empty());
    }

    #[test]
    fn sigma_on_cycles_is_the_repelling_fixed_point() {
        let sys = fast();
        let orbits: Vec<_> = (2..=6)
            .flat_map(|n| interior_periodic_orbits(&sys, n, 400, None).unwrap().orbits)
            .collect();
        assert!(orbits.len() > 10, "{}", orbits.len());
        let m = match_sigma_to_orbits(&sys, &orbits, &fast_params(), 1);
        let ok = m.iter().filter(|x| x.matched).count();
        assert!(ok as f64 >= 0.95 * m.len() as f64, "{ok}/{}", m.len());
    }

    #[test]
    fn graph_symmetry_and_mean() {
        let sys = fast();
        let g = SeparatingGraph::compute(&sys, 128, &fast_params(), 0).unwrap();
        let (decided, agree) = g.involution_pairs();
        assert!(decided > 60);
        assert!(agree as f64 >= 0.99 * decided as f64, "{agree}/{decided}");
        assert!((g.mean() - 0.5).abs() < 0.01);
        for s in g.samples.iter().filter_map(|s| s.sigma) {
            assert!(s > 0.0 && s < 1.0);
        }
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 129);
        assert!(csv.starts_with("theta,sigma,method\n"));

        let leb = GridMeasure::lebesgue(128);
        let obs = Observable::standard_set();
        let est = central_measure_estimate(&g, &leb, &obs).unwrap();
        let one = obs.iter().position(|o| o.mode == 0 && o.degree == 0).unwrap();
        assert!((est.integrals[one] - 1.0).abs() < 1e-12);
        let t = obs.iter().position(|o| o.mode == 0 && o.degree == 1).unwrap();
        assert!((est.integrals[t] - 0.5).abs() < 0.01);
        assert!(central_measure_estimate(&g, &GridMeasure::lebesgue(64), &obs).is_err());
    }

    #[test]
    fn excluded_mass_aborts() {
        let mut samples = vec![
            SigmaSample {
                theta: 0.0,
                sigma: Some(0.5),
                method: SigmaMethod::Bisection
            };
            50
        ];
        samples[3].sigma = None;
        let g = SeparatingGraph {
            grid: 50,
            tol: SIGMA_TOL,
            samples,
        };
        let r = central_measure_estimate(&g, &GridMeasure::lebesgue(50), &Observable::standard_set());
        assert!(matches!(r, Err(KanError::ExcludedMass { .. })));
    }

    #[test]
    fn convergence_table_on_fast_family() {
        let sys = fast();
        let g = SeparatingGraph::compute(&sys, 256, &fast_params(), 0).unwrap();
        let est = central_measure_estimate(&g, &GridMeasure::lebesgue(256), &Observable::standard_set()).unwrap();
        let reports: Vec<OrbitReport> = (1..=7)
            .map(|n| interior_periodic_orbits(&sys, n, 2000, Some(&fast_params())).unwrap())
            .collect();
        let table = periodic_measure_convergence(&reports, &est);
        assert!(!table.rows.is_empty());
        for r in &table.rows {
            assert!(r.min_exponent >= 0.0);
        }
        assert!(table.rows.windows(2).all(|w| w[0].coverage <= w[1].coverage));
        let t = est.observables.iter().position(|o| o.mode == 0 && o.degree == 1).unwrap();
        let last = table.rows.last().unwrap();
        assert!(last.gaps[t] < 0.02, "{}", last.gaps[t]);
    }

    #[test]
    fn standard_observables() {
        let obs = Observable::standard_set();
        assert_eq!(obs.len(), 45);
        assert_eq!(obs[0].name(), "cos0_t0");
        assert_eq!(obs[0].eval(0.3, 0.7), 1.0);
    }

    #[test]
    fn several_fixed_points_pick_nearest_sigma() {
        // Long cycle on a strongly coupled fiber: report alternates when present.
        let sys = KanSystem::new(ExpandingCircleMap::linear(3).unwrap(), FiberFamily::kan_family(0.45)).unwrap();
        let rep = interior_periodic_orbits(&sys, 6, 800, Some(&fast_params())).unwrap();
        for o in &rep.orbits {
            if !o.alternates.is_empty() {
                if let Some(s) = o.sigma {
                    for a in &o.alternates {
                        assert!((o.t - s).abs() <= (a - s).abs());
                    }
                }
            }
        }
    }
}
