//! Run configuration: one JSON file, every field defaulted.

use crate::basins::ClassifyParams;
use crate::central::{SigmaParams, SIGMA_N_MAX, SIGMA_TOL};
use crate::error::{KanError, Result};
use crate::ruelle::{solve_equilibrium, GridMeasure};
use crate::series::{Poly, TrigPoly};
use crate::skew::{FiberFamily, KanSystem};
use crate::torus::ExpandingCircleMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub degree: i64,
    #[serde(default)]
    pub fourier_cos: Vec<f64>,
    #[serde(default)]
    pub fourier_sin: Vec<f64>,
    #[serde(default)]
    pub amplitude: f64,
}

impl BaseSpec {
    pub fn build(&self) -> Result<ExpandingCircleMap> {
        ExpandingCircleMap::new(
            self.degree,
            TrigPoly::new(self.fourier_cos.clone(), self.fourier_sin.clone()),
            self.amplitude,
        )
    }
}

/// Either `{"builtin": "kan1994"}` or a base block with a separable fiber family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "C_cos", default, skip_serializing_if = "Option::is_none")]
    pub c_cos: Option<Vec<f64>>,
    #[serde(rename = "C_sin", default, skip_serializing_if = "Option::is_none")]
    pub c_sin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_poly: Option<Vec<f64>>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self::builtin("kan1994")
    }
}

impl SystemSpec {
    pub fn builtin(name: &str) -> Self {
        Self {
            builtin: Some(name.into()),
            base: None,
            epsilon: None,
            c_cos: None,
            c_sin: None,
            xi_poly: None,
        }
    }

    /// `t + ε·C(θ)·ξ(t)` over `base`; `C` defaults to `cos 2πθ`, `ξ` to `t(1 − t)`.
    pub fn family(base: BaseSpec, epsilon: f64) -> Self {
        Self {
            builtin: None,
            base: Some(base),
            epsilon: Some(epsilon),
            c_cos: None,
            c_sin: None,
            xi_poly: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KanError::Config(e.to_string()))
    }

    pub fn coupling(&self) -> TrigPoly {
        match (&self.c_cos, &self.c_sin) {
            (None, None) => TrigPoly::cosine(1, 1.0),
            (c, s) => TrigPoly::new(c.clone().unwrap_or_default(), s.clone().unwrap_or_default()),
        }
    }

    pub fn profile(&self) -> Poly {
        self.xi_poly.clone().map_or_else(Poly::logistic, |c| Poly { coeffs: c })
    }

    pub fn build(&self) -> Result<KanSystem> {
        match (&self.builtin, &self.base) {
            (Some(name), None) => {
                if self.epsilon.is_some() || self.c_cos.is_some() || self.c_sin.is_some() || self.xi_poly.is_some() {
                    return Err(KanError::Config(
                        "system: a builtin takes no epsilon/C_cos/C_sin/xi_poly".into(),
                    ));
                }
                match name.as_str() {
                    "kan1994" => Ok(KanSystem::kan1994()),
                    other => Err(KanError::Config(format!("system.builtin: unknown builtin \"{other}\""))),
                }
            }
            (None, Some(base)) => {
                let epsilon = self
                    .epsilon
                    .ok_or_else(|| KanError::Config("system.epsilon: missing".into()))?;
                KanSystem::new(
                    base.build()?,
                    FiberFamily::Separable {
                        epsilon,
                        coupling: self.coupling(),
                        profile: self.profile(),
                    },
                )
            }
            (Some(_), Some(_)) => Err(KanError::Config("system: give either builtin or base, not both".into())),
            (None, None) => Err(KanError::Config("system: needs builtin or base".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    #[default]
    Lebesgue,
    Equilibrium { potential: TrigPoly },
}

impl MeasureSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Lebesgue => "lebesgue",
            Self::Equilibrium { .. } => "equilibrium",
        }
    }

    /// The measure on a grid of size `grid`; equilibrium states are solved on the system's base.
    pub fn build(&self, sys: &KanSystem, grid: usize) -> Result<GridMeasure> {
        match self {
            Self::Lebesgue => Ok(GridMeasure::lebesgue(grid)),
            Self::Equilibrium { potential } => Ok(solve_equilibrium(
                sys.base(),
                potential,
                grid,
                crate::ruelle::DEFAULT_TOL,
                crate::ruelle::DEFAULT_MAX_ITER,
            )?
            .measure),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub expanding_grid: usize,
    pub k1_grid: usize,
    pub k2_grid_theta: usize,
    pub k2_grid_t: usize,
    pub exponent_grid: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            expanding_grid: 1 << 12,
            k1_grid: 1 << 12,
            k2_grid_theta: 1 << 10,
            k2_grid_t: 1 << 8,
            exponent_grid: 1 << 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinConfig {
    pub width: usize,
    pub height: usize,
    pub n_max: usize,
    pub delta: f64,
    pub window: usize,
    pub coarse_cols: usize,
    pub coarse_rows: usize,
    pub coverage_samples: usize,
    pub coverage_ns: Vec<usize>,
}

impl Default for BasinConfig {
    fn default() -> Self {
        let p = ClassifyParams::default();
        Self {
            width: 512,
            height: 512,
            n_max: p.n_max,
            delta: p.delta,
            window: p.window,
            coarse_cols: 32,
            coarse_rows: 16,
            coverage_samples: 10_000,
            coverage_ns: vec![0, 500, 1000, 2000, 5000],
        }
    }
}

impl BasinConfig {
    pub fn params(&self) -> ClassifyParams {
        ClassifyParams {
            n_max: self.n_max,
            delta: self.delta,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaConfig {
    pub grid: usize,
    pub n_max: usize,
    pub delta: f64,
    pub window: usize,
    pub tol: f64,
    /// Also compute the graph on `2·grid` and report the total-variation ratio.
    pub refine: bool,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        let p = ClassifyParams::default();
        Self {
            grid: 4096,
            n_max: SIGMA_N_MAX,
            delta: p.delta,
            window: p.window,
            tol: SIGMA_TOL,
            refine: false,
        }
    }
}

impl SigmaConfig {
    pub fn params(&self) -> SigmaParams {
        SigmaParams {
            classify: ClassifyParams {
                n_max: self.n_max,
                delta: self.delta,
                window: self.window,
            },
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitsConfig {
    pub periods: Vec<usize>,
    pub cap: usize,
    /// Periods up to this one get a bisected σ at every accepted orbit.
    pub match_max_period: usize,
}

impl Default for OrbitsConfig {
    fn default() -> Self {
        Self {
            periods: (1..=12).collect(),
            cap: 20_000,
            match_max_period: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub fibers: usize,
    pub fiber_ns: Vec<usize>,
    pub fiber_epsilon: f64,
    /// Potentials compared against the transfer-operator pressure.
    pub potentials: Vec<TrigPoly>,
    pub pressure_grid: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.05],
            ns: (4..=10).collect(),
            fibers: 16,
            fiber_ns: (1..=40).collect(),
            fiber_epsilon: 0.05,
            potentials: vec![TrigPoly::zero(), TrigPoly::cosine(1, 0.2)],
            pressure_grid: 1 << 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub potential: TrigPoly,
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self {
            potential: TrigPoly::zero(),
            grid: 1 << 12,
            tol: crate::ruelle::DEFAULT_TOL,
            max_iter: crate::ruelle::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub epsilons: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            epsilons: (0..5).map(|k| (1.0 / 32.0) / f64::from(1u32 << k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub measure: MeasureSpec,
    pub measure_grid: usize,
    pub seed: u64,
    pub workers: usize,
    pub output: String,
    pub verify: VerifyConfig,
    pub basin: BasinConfig,
    pub sigma: SigmaConfig,
    pub orbits: OrbitsConfig,
    pub entropy: EntropyConfig,
    pub equilibrium: EquilibriumConfig,
    pub scan: ScanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::default(),
            measure: MeasureSpec::default(),
            measure_grid: 1 << 14,
            seed: 0,
            workers: 0,
            output: "kanlab-out".into(),
            verify: VerifyConfig::default(),
            basin: BasinConfig::default(),
            sigma: SigmaConfig::default(),
            orbits: OrbitsConfig::default(),
            entropy: EntropyConfig::default(),
            equilibrium: EquilibriumConfig::default(),
            scan: ScanConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KanError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KanError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| KanError::Config(format!("{}: {e}", path.display())))
    }

    /// The configuration embedded in reports and hashed: everything except
    /// the worker count and the output directory, which do not affect results.
    pub fn resolved(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(m) = &mut v {
            m.remove("workers");
            m.remove("output");
        }
        Ok(v)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(crate::output::sha256_hex(crate::output::canonical_json(&self.resolved()?)?.as_bytes()))
    }
}
