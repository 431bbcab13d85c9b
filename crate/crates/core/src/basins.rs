//! Finite-time basin labels, rasters over the cylinder, and coverage curves.

use crate::error::{KanError, Result};
use crate::exponents::check_negative_exponents;
use crate::pool;
use crate::ruelle::GridMeasure;
use crate::seeding::item_rng;
use crate::skew::{BaseOrbit, KanSystem, SliceTape};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "BASIN0")]
    Basin0,
    #[serde(rename = "BASIN1")]
    Basin1,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

impl Label {
    pub fn flip(self) -> Self {
        match self {
            Self::Basin0 => Self::Basin1,
            Self::Basin1 => Self::Basin0,
            Self::Undecided => Self::Undecided,
        }
    }

    pub fn is_decided(self) -> bool {
        self != Self::Undecided
    }

    pub fn byte(self) -> u8 {
        match self {
            Self::Basin0 => 0,
            Self::Basin1 => 255,
            Self::Undecided => 128,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Basin0),
            255 => Some(Self::Basin1),
            128 => Some(Self::Undecided),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub n_max: usize,
    pub delta: f64,
    pub window: usize,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            n_max: 5000,
            delta: 1e-6,
            window: 50,
        }
    }
}

impl ClassifyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(KanError::InvalidParameter(format!("delta must lie in (0, 1/2), got {}", self.delta)));
        }
        if self.window == 0 {
            return Err(KanError::InvalidParameter("window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    /// Index of the iterate that completed the window; `None` if undecided.
    pub time: Option<usize>,
}

/// Classify `t0` along the slices of `tape`. Examines iterates `t_0 ..= t_{N_max}`.
pub fn classify_on_tape(tape: &mut SliceTape<'_>, t0: f64, params: &ClassifyParams) -> Classification {
    if t0 <= 0.0 {
        return Classification { label: Label::Basin0, time: Some(0) };
    }
    if t0 >= 1.0 {
        return Classification { label: Label::Basin1, time: Some(0) };
    }
    let mut avail = tape.available();
    let lo = params.delta;
    let hi = 1.0 - params.delta;
    let mut t = t0;
    let (mut below, mut above) = (0usize, 0usize);
    for j in 0..=params.n_max {
        if t < lo {
            below += 1;
            above = 0;
            if below >= params.window {
                return Classification { label: Label::Basin0, time: Some(j) };
            }
        } else if t > hi {
            above += 1;
            below = 0;
            if above >= params.window {
                return Classification { label: Label::Basin1, time: Some(j) };
            }
        } else {
            below = 0;
            above = 0;
        }
        if j < params.n_max {
            if j >= avail {
                tape.reserve_steps((2 * j).max(4096).min(params.n_max));
                avail = tape.available();
            }
            t = tape.at(j).value(t).clamp(0.0, 1.0);
        }
    }
    Classification { label: Label::Undecided, time: None }
}

pub fn classify(sys: &KanSystem, point: (f64, f64), params: &ClassifyParams) -> Classification {
    let mut tape = SliceTape::new(sys, &BaseOrbit::Float(point.0));
    classify_on_tape(&mut tape, point.1, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub basin0: f64,
    pub basin1: f64,
    pub undecided: f64,
}

impl Fractions {
    pub fn of(labels: &[Label]) -> Self {
        let n = labels.len().max(1) as f64;
        let c0 = labels.iter().filter(|&&l| l == Label::Basin0).count() as f64;
        let c1 = labels.iter().filter(|&&l| l == Label::Basin1).count() as f64;
        let cu = labels.len() as f64 - c0 - c1;
        Self {
            basin0: c0 / n,
            basin1: c1 / n,
            undecided: cu / n,
        }
    }
}

/// Labels on a `width × height` grid of cell centres. Row 0 is the top (largest `t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinRaster {
    pub width: usize,
    pub height: usize,
    pub params: ClassifyParams,
    labels: Vec<Label>,
    pub fractions: Fractions,
    pub warnings: Vec<String>,
}

impl BasinRaster {
    pub fn from_labels(width: usize, height: usize, params: ClassifyParams, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(KanError::InvalidParameter("label count does not match raster size".into()));
        }
        Ok(Self {
            width,
            height,
            params,
            fractions: Fractions::of(&labels),
            labels,
            warnings: Vec::new(),
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, col: usize, row: usize) -> Label {
        self.labels[row * self.width + col]
    }

    pub fn theta_of(&self, col: usize) -> f64 {
        (col as f64 + 0.5) / self.width as f64
    }

    pub fn t_of(&self, row: usize) -> f64 {
        (self.height - row) as f64 / self.height as f64 - 0.5 / self.height as f64
    }

    /// Cell of `(θ + ½, 1 − t)`. Needs an even width.
    pub fn involution(&self, col: usize, row: usize) -> (usize, usize) {
        ((col + self.width / 2) % self.width, self.height - 1 - row)
    }

    /// Share of decided cells whose image under the involution carries the flipped label.
    pub fn symmetry_agreement(&self) -> f64 {
        let mut decided = 0usize;
        let mut agree = 0usize;
        for row in 0..self.height {
            for col in 0..self.width {
                let l = self.get(col, row);
                if !l.is_decided() {
                    continue;
                }
                decided += 1;
                let (c, r) = self.involution(col, row);
                if self.get(c, r) == l.flip() {
                    agree += 1;
                }
            }
        }
        if decided == 0 {
            f64::NAN
        } else {
            agree as f64 / decided as f64
        }
    }

    /// Binary PGM (P5), one byte per cell.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.labels.iter().map(|l| l.byte()));
        out
    }

    pub fn from_pgm(bytes: &[u8], params: ClassifyParams) -> Result<Self> {
        let bad = |m: &str| KanError::InvalidParameter(format!("malformed PGM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(bad("expected P5 with maxval 255"));
        }
        let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let body = bytes.get(pos..pos + w * h).ok_or_else(|| bad("short body"))?;
        let labels = body
            .iter()
            .map(|&b| Label::from_byte(b).ok_or_else(|| bad("unknown byte")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(w, h, params, labels)
    }
}

/// Axiom and exponent checks ahead of a raster; failures become warnings.
pub fn preflight(sys: &KanSystem) -> Vec<String> {
    let mut warnings = Vec::new();
    let k1 = sys.verify_k1(1 << 12);
    if !k1.passed {
        warnings.push(format!("K1 failed: boundary deviation {:e}", k1.max_deviation));
    }
    match sys.verify_k2(1 << 10, 1 << 8) {
        Ok(r) if !r.passed => warnings.push(format!("K2 failed: max |dt| {} >= {}", r.max_abs_dt, r.threshold)),
        Err(e) => warnings.push(format!("K2 not evaluated: {e}")),
        _ => {}
    }
    match sys.verify_k3() {
        Ok(r) if !r.passed => warnings.push("K3 failed".into()),
        Err(e) => warnings.push(format!("K3 not evaluated: {e}")),
        _ => {}
    }
    match check_negative_exponents(sys, &GridMeasure::lebesgue(1 << 12), "lebesgue") {
        Ok(r) if !r.passed => warnings.push(format!(
            "boundary exponents not negative: {:e}, {:e}",
            r.lambda0, r.lambda1
        )),
        Err(e) => warnings.push(format!("exponents not evaluated: {e}")),
        _ => {}
    }
    warnings
}

/// Classify every cell centre. Columns share one base orbit and run in parallel.
pub fn raster(
    sys: &KanSystem,
    width: usize,
    height: usize,
    params: &ClassifyParams,
    workers: usize,
) -> Result<BasinRaster> {
    params.validate()?;
    if width == 0 || height == 0 {
        return Err(KanError::InvalidParameter("raster must be non-empty".into()));
    }
    let columns: Vec<Vec<Label>> = pool::install(workers, || {
        (0..width)
            .into_par_iter()
            .map(|col| {
                let theta = (col as f64 + 0.5) / width as f64;
                let mut tape = SliceTape::new(sys, &BaseOrbit::Float(theta));
                tape.reserve_steps(params.n_max);
                (0..height)
                    .map(|row| {
                        let t = (height - row) as f64 / height as f64 - 0.5 / height as f64;
                        classify_on_tape(&mut tape, t, params).label
                    })
                    .collect()
            })
            .collect()
    });
    let mut labels = vec![Label::Undecided; width * height];
    for (col, column) in columns.into_iter().enumerate() {
        for (row, l) in column.into_iter().enumerate() {
            labels[row * width + col] = l;
        }
    }
    let mut r = BasinRaster::from_labels(width, height, *params, labels)?;
    r.warnings = preflight(sys);
    Ok(r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoarseCell {
    pub col: usize,
    pub row: usize,
    pub basin0: usize,
    pub basin1: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntermingledReport {
    pub cols: usize,
    pub rows: usize,
    /// Interior coarse cells only; rows touching `t = 0` or `t = 1` are skipped.
    pub cells: Vec<CoarseCell>,
    pub failed: usize,
    pub passed: bool,
}

/// Both labels in every interior cell of a `cols × rows` partition.
pub fn intermingled_test(raster: &BasinRaster, cols: usize, rows: usize) -> Result<IntermingledReport> {
    if cols == 0 || rows < 3 {
        return Err(KanError::InvalidParameter("partition needs at least 3 rows".into()));
    }
    if raster.width < 16 * cols || raster.height < 16 * rows {
        return Err(KanError::InvalidParameter(format!(
            "raster {}x{} is finer than 16x the {cols}x{rows} partition",
            raster.width, raster.height
        )));
    }
    let mut counts = vec![(0usize, 0usize); cols * rows];
    for r in 0..raster.height {
        let cr = r * rows / raster.height;
        for c in 0..raster.width {
            let cc = c * cols / raster.width;
            match raster.get(c, r) {
                Label::Basin0 => counts[cr * cols + cc].0 += 1,
                Label::Basin1 => counts[cr * cols + cc].1 += 1,
                Label::Undecided => {}
            }
        }
    }
    let mut cells = Vec::new();
    for row in 1..rows - 1 {
        for col in 0..cols {
            let (b0, b1) = counts[row * cols + col];
            cells.push(CoarseCell {
                col,
                row,
                basin0: b0,
                basin1: b1,
                passed: b0 > 0 && b1 > 0,
            });
        }
    }
    let failed = cells.iter().filter(|c| !c.passed).count();
    Ok(IntermingledReport {
        cols,
        rows,
        failed,
        passed: failed == 0,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub fraction: f64,
}

/// Bits of the sampling lattice. On it `kθ mod 1` is exact in `f64` for small `k`,
/// so `x` and its involution image follow exactly paired base orbits.
pub const LATTICE_BITS: u32 = 40;

pub fn random_point(rng: &mut impl Rng) -> (f64, f64) {
    let scale = (1u64 << LATTICE_BITS) as f64;
    let draw = |r: &mut _| (Rng::random::<u64>(r) >> (64 - LATTICE_BITS)) as f64 / scale;
    let theta = draw(rng);
    (theta, draw(rng))
}

pub const MIN_COVERAGE_SAMPLES: usize = 10_000;

/// Undecided share of `samples` seeded uniform points for each `N_max` in `ns`.
pub fn coverage_curve(
    sys: &KanSystem,
    samples: usize,
    ns: &[usize],
    params: &ClassifyParams,
    seed: u64,
    workers: usize,
) -> Result<Vec<CoverageRow>> {
    params.validate()?;
    if samples < MIN_COVERAGE_SAMPLES {
        return Err(KanError::InvalidParameter(format!(
            "coverage needs at least {MIN_COVERAGE_SAMPLES} samples, got {samples}"
        )));
    }
    let longest = ns.iter().copied().max().unwrap_or(0);
    let run = ClassifyParams { n_max: longest, ..*params };
    let times: Vec<Option<usize>> = pool::install(workers, || {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let x = random_point(&mut item_rng(seed, i as u64));
                classify(sys, x, &run).time
            })
            .collect()
    });
    Ok(ns
        .iter()
        .map(|&n| CoverageRow {
            n,
            fraction: times.iter().filter(|tm| tm.is_none_or(|x| x > n)).count() as f64 / samples as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Poly, TrigPoly};
    use crate::skew::FiberFamily;
    use crate::torus::ExpandingCircleMap;

    fn fast() -> KanSystem {
        KanSystem::kan_family(0.3).unwrap()
    }

    fn fast_params() -> ClassifyParams {
        ClassifyParams { n_max: 20_000, ..Default::default() }
    }

    #[test]
    fn boundary_points_are_immediate() {
        let k = KanSystem::kan1994();
        let p = ClassifyParams::default();
        assert_eq!(classify(&k, (0.3, 0.0), &p), Classification { label: Label::Basin0, time: Some(0) });
        assert_eq!(classify(&k, (0.3, 1.0), &p), Classification { label: Label::Basin1, time: Some(0) });
    }

    #[test]
    fn window_counts_consecutive_iterates() {
        let flat = KanSystem::kan_family(0.0).unwrap();
        let p = ClassifyParams { n_max: 100, delta: 1e-3, window: 5 };
        // Identity fibers: a point inside the band decides once the window fills.
        assert_eq!(classify(&flat, (0.1, 1e-4), &p).time, Some(4));
        assert_eq!(classify(&flat, (0.1, 0.5), &p).label, Label::Undecided);
        let zero = ClassifyParams { n_max: 0, ..p };
        assert_eq!(classify(&flat, (0.1, 1e-4), &zero).label, Label::Undecided);
    }

    #[test]
    fn neutral_family_never_decides() {
        let flat = KanSystem::kan_family(0.0).unwrap();
        let r = raster(&flat, 16, 16, &ClassifyParams { n_max: 500, ..Default::default() }, 1).unwrap();
        assert_eq!(r.fractions.undecided, 1.0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn involution_flips_labels() {
        let sys = fast();
        let p = fast_params();
        let mut rng = item_rng(7, 0);
        let (mut decided, mut agree) = (0, 0);
        while decided < 400 {
            let (th, t) = random_point(&mut rng);
            let a = classify(&sys, (th, t), &p).label;
            if !a.is_decided() {
                continue;
            }
            decided += 1;
            let b = classify(&sys, ((th + 0.5) % 1.0, 1.0 - t), &p).label;
            agree += usize::from(b == a.flip());
        }
        assert!(agree as f64 / decided as f64 >= 0.99, "{agree}/{decided}");
    }

    #[test]
    fn raster_symmetry_and_intermingling() {
        let sys = fast();
        let r = raster(&sys, 64, 64, &fast_params(), 0).unwrap();
        let f = r.fractions;
        assert!((f.basin0 + f.basin1 + f.undecided - 1.0).abs() < 1e-15);
        assert!(f.undecided < 0.01, "{f:?}");
        assert!((f.basin0 - 0.5).abs() < 0.05, "{f:?}");
        assert!(r.symmetry_agreement() >= 0.99);
        let im = intermingled_test(&r, 4, 4).unwrap();
        assert!(im.passed, "{:?}", im.cells.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        assert!(intermingled_test(&r, 8, 8).is_err());
    }

    #[test]
    fn raster_is_independent_of_workers() {
        let sys = fast();
        let p = ClassifyParams { n_max: 3000, ..Default::default() };
        let a = raster(&sys, 24, 20, &p, 1).unwrap();
        let b = raster(&sys, 24, 20, &p, 3).unwrap();
        assert_eq!(a.to_pgm(), b.to_pgm());
    }

    #[test]
    fn sign_flip_swaps_labels() {
        let base = ExpandingCircleMap::linear(3).unwrap();
        let flipped = KanSystem::new(
            base,
            FiberFamily::Separable {
                epsilon: -0.3,
                coupling: TrigPoly::cosine(1, 1.0),
                profile: Poly::logistic(),
            },
        )
        .unwrap();
        let p = fast_params();
        let a = raster(&fast(), 32, 32, &p, 0).unwrap();
        let b = raster(&flipped, 32, 32, &p, 0).unwrap();
        let mut decided = 0;
        let mut agree = 0;
        for row in 0..32 {
            for col in 0..32 {
                let l = a.get(col, row);
                if l.is_decided() {
                    decided += 1;
                    agree += usize::from(b.get(col, 31 - row) == l.flip());
                }
            }
        }
        assert!(agree as f64 >= 0.99 * decided as f64, "{agree}/{decided}");
    }

    #[test]
    fn positive_exponent_breaks_intermingling() {
        // C = 1 + cos: t = 0 repels, so the bottom rows lose basin 0.
        let sys = KanSystem::new(
            ExpandingCircleMap::linear(3).unwrap(),
            FiberFamily::Separable {
                epsilon: 0.3,
                coupling: TrigPoly::new(vec![1.0, 1.0], vec![]),
                profile: Poly::logistic(),
            },
        )
        .unwrap();
        let r = raster(&sys, 64, 64, &ClassifyParams { n_max: 5000, ..Default::default() }, 0).unwrap();
        let im = intermingled_test(&r, 4, 4).unwrap();
        assert!(!im.passed);
        assert!(im.cells.iter().any(|c| c.row == 2 && !c.passed));
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn labels_survive_longer_runs() {
        let sys = fast();
        let p = ClassifyParams { n_max: 2000, ..Default::default() };
        let p2 = ClassifyParams { n_max: 4000, ..p };
        for i in 0..2000u64 {
            let x = random_point(&mut item_rng(3, i));
            let a = classify(&sys, x, &p);
            if a.label.is_decided() {
                assert_eq!(classify(&sys, x, &p2), a);
            }
        }
    }

    #[test]
    fn coverage_curve_is_monotone() {
        let sys = fast();
        let rows = coverage_curve(&sys, 10_000, &[0, 200, 1000, 4000], &ClassifyParams::default(), 11, 0).unwrap();
        assert_eq!(rows[0].fraction, 1.0);
        assert!(rows.windows(2).all(|w| w[0].fraction >= w[1].fraction));
        assert!(rows[3].fraction < 0.05, "{rows:?}");
        assert!(coverage_curve(&sys, 10, &[1], &ClassifyParams::default(), 1, 0).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let labels = vec![Label::Basin0, Label::Basin1, Label::Undecided, Label::Basin0, Label::Basin1, Label::Basin1];
        let r = BasinRaster::from_labels(3, 2, ClassifyParams::default(), labels).unwrap();
        let bytes = r.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let back = BasinRaster::from_pgm(&bytes, ClassifyParams::default()).unwrap();
        assert_eq!(back.labels(), r.labels());
        assert!((r.fractions.basin1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn geometry() {
        let r = BasinRaster::from_labels(4, 4, ClassifyParams::default(), vec![Label::Undecided; 16]).unwrap();
        assert_eq!(r.t_of(0), 0.875);
        assert_eq!(r.t_of(3), 0.125);
        assert_eq!(r.involution(0, 0), (2, 3));
        assert!(r.symmetry_agreement().is_nan());
    }
}
