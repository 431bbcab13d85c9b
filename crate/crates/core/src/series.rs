//! Trigonometric and algebraic polynomials with exact derivatives.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// `f(θ) = Σ_m cos[m]·cos(2πmθ) + Σ_{m≥1} sin[m-1]·sin(2πmθ)`.
///
/// The cosine list starts at the constant mode, the sine list at mode 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { cos, sin }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c], vec![])
    }

    /// `amplitude · cos(2π·mode·θ)`
    pub fn cosine(mode: usize, amplitude: f64) -> Self {
        let mut cos = vec![0.0; mode + 1];
        cos[mode] = amplitude;
        Self::new(cos, vec![])
    }

    /// `amplitude · sin(2π·mode·θ)`, `mode ≥ 1`.
    pub fn sine(mode: usize, amplitude: f64) -> Self {
        assert!(mode >= 1, "sine modes start at 1");
        let mut sin = vec![0.0; mode];
        sin[mode - 1] = amplitude;
        Self::new(vec![], sin)
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> usize {
        let dc = self.cos.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        let ds = self.sin.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
        dc.max(ds)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (m, &a) in self.cos.iter().enumerate() {
            if a != 0.0 {
                acc += a * (TAU * m as f64 * theta).cos();
            }
        }
        for (i, &b) in self.sin.iter().enumerate() {
            if b != 0.0 {
                acc += b * (TAU * (i + 1) as f64 * theta).sin();
            }
        }
        acc
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (m, &a) in self.cos.iter().enumerate().skip(1) {
            if a != 0.0 {
                let w = TAU * m as f64;
                acc -= a * w * (w * theta).sin();
            }
        }
        for (i, &b) in self.sin.iter().enumerate() {
            if b != 0.0 {
                let w = TAU * (i + 1) as f64;
                acc += b * w * (w * theta).cos();
            }
        }
        acc
    }

    /// Lebesgue mean (the constant mode).
    pub fn mean(&self) -> f64 {
        self.cos.first().copied().unwrap_or(0.0)
    }

    /// Upper bound on `sup f − inf f` from the coefficient moduli.
    pub fn oscillation_bound(&self) -> f64 {
        let n = self.cos.len().max(self.sin.len() + 1);
        (1..n)
            .map(|m| {
                let a = self.cos.get(m).copied().unwrap_or(0.0);
                let b = self.sin.get(m - 1).copied().unwrap_or(0.0);
                2.0 * a.hypot(b)
            })
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.cos.iter().map(|c| c * s).collect(),
            self.sin.iter().map(|c| c * s).collect(),
        )
    }

    pub fn plus_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        if out.cos.is_empty() {
            out.cos.push(0.0);
        }
        out.cos[0] += c;
        out
    }
}

/// Real polynomial `Σ coeffs[i]·t^i`, ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `t(1 − t)`
    pub fn logistic() -> Self {
        Self::new(vec![0.0, 1.0, -1.0])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * t + i as f64 * c)
    }

    pub fn vanishes_at_endpoints(&self, tol: f64) -> bool {
        self.eval(0.0).abs() <= tol && self.eval(1.0).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_eval_and_derivative() {
        let p = TrigPoly::new(vec![1.0, 0.5], vec![0.25]);
        let th = 0.137;
        let expect = 1.0 + 0.5 * (TAU * th).cos() + 0.25 * (TAU * th).sin();
        assert!((p.eval(th) - expect).abs() < 1e-15);
        let h = 1e-6;
        let fd = (p.eval(th + h) - p.eval(th - h)) / (2.0 * h);
        assert!((p.derivative(th) - fd).abs() < 1e-8);
        assert_eq!(p.degree(), 1);
        assert_eq!(TrigPoly::sine(3, 1.0).degree(), 3);
    }

    #[test]
    fn poly_logistic() {
        let xi = Poly::logistic();
        assert_eq!(xi.eval(0.5), 0.25);
        assert_eq!(xi.derivative(0.0), 1.0);
        assert_eq!(xi.derivative(1.0), -1.0);
        assert!(xi.vanishes_at_endpoints(0.0));
        assert!(!Poly::new(vec![0.0, 1.0]).vanishes_at_endpoints(1e-12));
    }

    #[test]
    fn oscillation_bound_of_cosine() {
        assert!((TrigPoly::cosine(1, 0.2).oscillation_bound() - 0.4).abs() < 1e-15);
        assert_eq!(TrigPoly::constant(3.0).oscillation_bound(), 0.0);
    }
}
