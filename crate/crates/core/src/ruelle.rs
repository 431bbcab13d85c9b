//! Grid discretisation of the Ruelle transfer operator of the base map.
//!
//! `(L f)(x) = Σ_{E(y) = x} e^{φ(y)} f(y)` is assembled on the cell centres
//! `x_i = (i + ½)/G` with `f(y)` linearly interpolated. Power iteration on `L`
//! gives the eigenfunction `h` and `Λ = e^{P(φ)}`; on the adjoint it gives the
//! conformal measure `m`. The equilibrium state is `h·m`.

use crate::error::{KanError, Result};
use crate::seeding::item_rng;
use crate::series::TrigPoly;
use crate::torus::{wrap, ExpandingCircleMap};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Fourier modes used by the weak* distance proxy.
pub const WEAK_STAR_MODES: usize = 8;

/// Probability weights on the cell centres of a uniform grid on `S¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn lebesgue(grid: usize) -> Self {
        Self {
            weights: vec![1.0 / grid as f64; grid],
        }
    }

    /// Normalises `weights`; rejects negative or non-finite entries.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(KanError::InvalidParameter("empty measure".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(KanError::InvalidParameter(
                "measure weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(KanError::InvalidParameter("measure has zero mass".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn grid(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        cell_center(i, self.weights.len())
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid()).map(|i| self.node(i))
    }

    /// Midpoint quadrature `Σ w_i f(x_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * f(self.node(i)))
            .sum()
    }

    pub fn integrate_samples(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.grid());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `(∫cos 2πmθ, ∫sin 2πmθ)`
    pub fn fourier_moment(&self, mode: usize) -> (f64, f64) {
        let w = TAU * mode as f64;
        (
            self.integrate(|th| (w * th).cos()),
            self.integrate(|th| (w * th).sin()),
        )
    }

    /// Mass of the arc `[a, a + len)` with the weights spread uniformly over cells.
    pub fn measure_of_arc(&self, a: f64, len: f64) -> f64 {
        self.integrate_arc(a, len, |_| 1.0)
    }

    /// `∫_{[a, a+len)} f dν` with the cell-wise constant density and `f`
    /// sampled at the midpoint of each cell piece.
    pub fn integrate_arc(&self, a: f64, len: f64, f: impl Fn(f64) -> f64) -> f64 {
        let g = self.grid() as f64;
        let mut acc = 0.0;
        let mut x = a;
        let end = a + len;
        while x < end {
            let cell = (x * g).floor();
            let next = ((cell + 1.0) / g).min(end);
            let idx = (cell as i64).rem_euclid(self.grid() as i64) as usize;
            let piece = next - x;
            acc += self.weights[idx] * g * piece * f(wrap(0.5 * (x + next)));
            x = next;
        }
        acc
    }

    /// Weak* distance proxy: the largest Fourier-moment discrepancy up to `modes`.
    pub fn weak_star_distance(&self, other: &GridMeasure, modes: usize) -> f64 {
        (1..=modes)
            .map(|m| {
                let (c1, s1) = self.fourier_moment(m);
                let (c2, s2) = other.fourier_moment(m);
                (c1 - c2).abs().max((s1 - s2).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn cell_center(i: usize, grid: usize) -> f64 {
    (i as f64 + 0.5) / grid as f64
}

/// Periodic linear interpolation of node values at cell centres.
#[inline]
pub fn interpolate(values: &[f64], y: f64) -> f64 {
    let (i0, i1, frac) = interpolation_stencil(values.len(), y);
    values[i0] * (1.0 - frac) + values[i1] * frac
}

#[inline]
fn interpolation_stencil(grid: usize, y: f64) -> (usize, usize, f64) {
    let s = wrap(y) * grid as f64 - 0.5;
    let fl = s.floor();
    let frac = s - fl;
    let i0 = (fl as i64).rem_euclid(grid as i64) as usize;
    (i0, (i0 + 1) % grid, frac)
}

/// Sparse matrix of the discretised operator: `2|k|` entries per row.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    grid: usize,
    width: usize,
    index: Vec<u32>,
    weight: Vec<f64>,
}

impl TransferOperator {
    pub fn new(map: &ExpandingCircleMap, potential: &TrigPoly, grid: usize) -> Result<Self> {
        if grid < 2 {
            return Err(KanError::InvalidParameter("grid must be >= 2".into()));
        }
        let width = 2 * map.degree().unsigned_abs() as usize;
        let rows: Vec<Vec<(u32, f64)>> = (0..grid)
            .into_par_iter()
            .map(|i| {
                let x = cell_center(i, grid);
                let pre = map.inverse_branches(x)?;
                let mut row = Vec::with_capacity(width);
                for y in pre {
                    let g = potential.eval(y).exp();
                    let (i0, i1, frac) = interpolation_stencil(grid, y);
                    row.push((i0 as u32, g * (1.0 - frac)));
                    row.push((i1 as u32, g * frac));
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut index = Vec::with_capacity(grid * width);
        let mut weight = Vec::with_capacity(grid * width);
        for row in rows {
            for (j, w) in row {
                index.push(j);
                weight.push(w);
            }
        }
        Ok(Self {
            grid,
            width,
            index,
            weight,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid);
        (0..self.grid)
            .into_par_iter()
            .map(|i| {
                let r = i * self.width..(i + 1) * self.width;
                self.index[r.clone()]
                    .iter()
                    .zip(&self.weight[r])
                    .map(|(&j, &w)| w * f[j as usize])
                    .sum()
            })
            .collect()
    }

    /// Row vector times matrix: `(m L)_j = Σ_i m_i L_ij`.
    pub fn apply_adjoint(&self, m: &[f64]) -> Vec<f64> {
        assert_eq!(m.len(), self.grid);
        let mut out = vec![0.0; self.grid];
        for (i, &mi) in m.iter().enumerate() {
            let r = i * self.width..(i + 1) * self.width;
            for (&j, &w) in self.index[r.clone()].iter().zip(&self.weight[r]) {
                out[j as usize] += mi * w;
            }
        }
        out
    }
}

/// `L f` sampled at the grid nodes.
pub fn transfer_apply(
    map: &ExpandingCircleMap,
    potential: &TrigPoly,
    f: &[f64],
) -> Result<Vec<f64>> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(KanError::InvalidParameter("f must be finite".into()));
    }
    Ok(TransferOperator::new(map, potential, f.len())?.apply(f))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub potential: TrigPoly,
    pub grid: usize,
    pub pressure: f64,
    pub eigenvalue: f64,
    /// Eigenfunction, normalised so that `∫ h dm = 1`.
    pub eigenfunction: Vec<f64>,
    /// Eigenmeasure of the adjoint.
    pub conformal: GridMeasure,
    /// The invariant equilibrium state `h·m`.
    pub measure: GridMeasure,
    /// `J E(θ) = Λ e^{−φ(θ)} h(E θ)/h(θ)` of the equilibrium state.
    pub jacobian: Vec<f64>,
    pub iterations: usize,
}

pub fn solve_equilibrium(
    map: &ExpandingCircleMap,
    potential: &TrigPoly,
    grid: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumState> {
    if !grid.is_power_of_two() || grid < 1 << 10 {
        return Err(KanError::InvalidParameter(format!(
            "grid must be a power of two >= 2^10, got {grid}"
        )));
    }
    let op = TransferOperator::new(map, potential, grid)?;

    let mut h = vec![1.0; grid];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let next = op.apply(&h);
        let est = next.iter().sum::<f64>() / h.iter().sum::<f64>();
        let scale = grid as f64 / next.iter().sum::<f64>();
        let next: Vec<f64> = next.into_iter().map(|v| v * scale).collect();
        let change = h
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residual = (est - lambda).abs();
        lambda = est;
        h = next;
        if residual < tol && change < tol.sqrt() * 1e-2 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(KanError::NoConvergence {
            iterations,
            residual,
        });
    }

    let mut m = vec![1.0 / grid as f64; grid];
    converged = false;
    let mut adj_iter = 0;
    while adj_iter < max_iter {
        adj_iter += 1;
        let next = op.apply_adjoint(&m);
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.into_iter().map(|v| v / total).collect();
        residual = m
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        m = next;
        if residual < tol * 1e-3 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(KanError::NoConvergence {
            iterations: adj_iter,
            residual,
        });
    }

    let norm: f64 = h.iter().zip(&m).map(|(a, b)| a * b).sum();
    let h: Vec<f64> = h.into_iter().map(|v| v / norm).collect();
    let conformal = GridMeasure::from_weights(m)?;
    let measure = GridMeasure::from_weights(
        h.iter().zip(conformal.weights()).map(|(a, b)| a * b).collect(),
    )?;
    let jacobian = (0..grid)
        .map(|i| {
            let x = cell_center(i, grid);
            lambda * (-potential.eval(x)).exp() * interpolate(&h, map.evaluate(x)) / h[i]
        })
        .collect();
    Ok(EquilibriumState {
        potential: potential.clone(),
        grid,
        pressure: lambda.ln(),
        eigenvalue: lambda,
        eigenfunction: h,
        conformal,
        measure,
        jacobian,
        iterations: iterations.max(adj_iter),
    })
}

impl EquilibriumState {
    pub fn jacobian_at(&self, theta: f64) -> f64 {
        interpolate(&self.jacobian, theta)
    }

    /// `max |J(x_i) − J(x_{i+1})| / G^{-α}` over neighbouring nodes.
    pub fn jacobian_holder_quotient(&self, alpha: f64) -> f64 {
        let h = (1.0 / self.grid as f64).powf(alpha);
        (0..self.grid)
            .map(|i| (self.jacobian[i] - self.jacobian[(i + 1) % self.grid]).abs() / h)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionReport {
    /// Largest `max(r, 1/r)` of the Jacobian-product ratio, indexed by `n`.
    pub max_ratio: Vec<f64>,
    pub samples: usize,
    pub passed: bool,
}

/// Branch index of `z` in the partition cut at the preimages of 0.
fn branch_of(cuts: &[f64], z: f64) -> usize {
    match cuts.iter().rposition(|&c| c <= z) {
        Some(i) => i,
        None => cuts.len() - 1,
    }
}

/// Ratios of `n`-step Jacobian products for pairs in a common `n`-cylinder.
pub fn bounded_distortion_report(
    state: &EquilibriumState,
    map: &ExpandingCircleMap,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<DistortionReport> {
    let cuts = map.inverse_branches(0.0)?;
    let mut max_ratio: Vec<f64> = vec![1.0; n_max + 1];
    for n in 1..=n_max {
        for s in 0..samples {
            let mut rng = item_rng(seed, ((n as u64) << 32) | s as u64);
            let x0: f64 = rng.random();
            let mut itinerary = Vec::with_capacity(n);
            let mut x = x0;
            for _ in 0..n {
                itinerary.push(branch_of(&cuts, x));
                x = map.evaluate(x);
            }
            // Pull a fresh endpoint back along the same itinerary.
            let mut y: f64 = rng.random();
            for &b in itinerary.iter().rev() {
                let pre = map.inverse_branches(y)?;
                y = *pre
                    .iter()
                    .find(|&&c| branch_of(&cuts, c) == b)
                    .ok_or_else(|| KanError::Consistency("branch without preimage".into()))?;
            }
            let (mut xs, mut ys) = (x0, y);
            let mut log_ratio = 0.0;
            for _ in 0..n {
                log_ratio += state.jacobian_at(xs).ln() - state.jacobian_at(ys).ln();
                xs = map.evaluate(xs);
                ys = map.evaluate(ys);
            }
            max_ratio[n] = max_ratio[n].max(log_ratio.abs().exp());
        }
    }
    let first = if n_max >= 1 { max_ratio[1] } else { 1.0 };
    let worst = max_ratio.iter().copied().fold(1.0, f64::max);
    Ok(DistortionReport {
        passed: worst.is_finite() && worst <= 2.0 * first,
        max_ratio,
        samples,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityRow {
    pub s: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    /// Distances strictly decrease along the rows with `s > 0`.
    pub decreasing: bool,
}

/// Weak* distance from the equilibrium state of `E_s = k·θ + s·u(θ)` to that of `E_0`.
pub fn statistical_stability_experiment(
    degree: i64,
    deformation: &TrigPoly,
    potential: &TrigPoly,
    s_values: &[f64],
    grid: usize,
) -> Result<StabilityTable> {
    let osc = potential_oscillation(potential, 1 << 12);
    let entropy = (degree.unsigned_abs() as f64).ln();
    if osc >= entropy {
        return Err(KanError::InvalidParameter(format!(
            "sup phi - inf phi = {osc} must be below log k = {entropy}"
        )));
    }
    let base = ExpandingCircleMap::new(degree, deformation.clone(), 0.0)?;
    let reference = solve_equilibrium(&base, potential, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let rows = s_values
        .iter()
        .map(|&s| {
            let map = ExpandingCircleMap::new(degree, deformation.clone(), s)?;
            let st = solve_equilibrium(&map, potential, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            Ok(StabilityRow {
                s,
                distance: st
                    .measure
                    .weak_star_distance(&reference.measure, WEAK_STAR_MODES),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let positive: Vec<f64> = rows.iter().filter(|r| r.s > 0.0).map(|r| r.distance).collect();
    Ok(StabilityTable {
        decreasing: positive.windows(2).all(|w| w[1] < w[0]),
        rows,
    })
}

fn potential_oscillation(potential: &TrigPoly, grid: usize) -> f64 {
    let (lo, hi) = (0..grid)
        .map(|i| potential.eval(i as f64 / grid as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}
