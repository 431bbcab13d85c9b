//! The `kanlab` command line: argument parsing, pipelines and artifact writing.

use crate::basins::{coverage_curve, intermingled_test, raster, random_point};
use crate::central::{
    central_measure_estimate, interior_periodic_orbits, match_sigma_to_orbits, periodic_measure_convergence,
    Observable, SeparatingGraph,
};
use crate::config::RunConfig;
use crate::entropy::{
    entropy_estimate, fiber_entropy_check, reweighted_log_sum, slope_with_error, EntropyReport, Space,
};
use crate::error::{KanError, Result};
use crate::exponents::{check_negative_exponents, epsilon_expansion_scan};
use crate::output::{canonical_json, csv_table, fmt_f64, Artifacts};
use crate::pool;
use crate::ruelle::solve_equilibrium;
use crate::seeding::item_rng;
use crate::skew::KanSystem;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kanlab", version, about = "Numerics for Kan-like skew products on the cylinder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Skip the axiom and exponent checks before a pipeline.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Expansion, K1–K3 and boundary exponents; exit 1 if any fails.
    Verify,
    /// Basin raster (PGM + sidecar) and coverage curve.
    Basin,
    /// Separating graph σ on a grid.
    Sigma,
    /// Interior periodic orbits and their convergence to the central measure.
    Orbits,
    /// Separated-set entropy, pressure and fiber counts.
    Entropy,
    /// Equilibrium state of the base for a potential.
    Equilibrium,
    /// Boundary exponents along an ε family and the quadratic fit.
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Basin => "basin",
            Self::Sigma => "sigma",
            Self::Orbits => "orbits",
            Self::Entropy => "entropy",
            Self::Equilibrium => "equilibrium",
            Self::Scan => "scan",
        }
    }
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(cli.command, &cfg, cli.common.force) {
        Ok(Outcome { passed, dir }) => {
            eprintln!("{}: artifacts in {}", cli.command.name(), dir.display());
            if passed {
                EXIT_OK
            } else {
                eprintln!("{}: checks failed", cli.command.name());
                EXIT_CHECK_FAILED
            }
        }
        Err(KanError::Config(m)) => {
            eprintln!("config error: {m}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            EXIT_CHECK_FAILED
        }
    }
}

pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(o) = &common.out {
        cfg.output = o.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

pub struct Outcome {
    pub passed: bool,
    pub dir: PathBuf,
}

/// Build the artifacts of `command`, write them with a manifest, and report whether checks passed.
pub fn execute(command: Command, cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let start = Instant::now();
    let sys = cfg.system.build()?;
    let (mut artifacts, passed) = if command == Command::Verify {
        verify(&sys, cfg)?
    } else {
        if !force {
            let (_, ok) = verify(&sys, cfg)?;
            if !ok {
                return Err(KanError::Consistency(
                    "axiom or exponent checks failed; rerun `verify` for details or pass --force".into(),
                ));
            }
        }
        pool::install(cfg.workers, || build(command, &sys, cfg))?
    };
    let mut files: Vec<String> = artifacts.names().iter().map(|s| s.to_string()).collect();
    files.push("manifest.json".into());
    artifacts.add_json(
        "manifest.json",
        &json!({
            "command": command.name(),
            "config_hash": cfg.hash()?,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_seconds": start.elapsed().as_secs_f64(),
            "files": files,
            "seed": cfg.seed,
        }),
    )?;
    let dir = PathBuf::from(&cfg.output);
    artifacts.commit(&dir)?;
    Ok(Outcome { passed, dir })
}

/// Artifacts of the non-verify commands, without the manifest.
pub fn build(command: Command, sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    match command {
        Command::Verify => verify(sys, cfg),
        Command::Basin => basin(sys, cfg),
        Command::Sigma => sigma(sys, cfg),
        Command::Orbits => orbits(sys, cfg),
        Command::Entropy => entropy(sys, cfg),
        Command::Equilibrium => equilibrium(sys, cfg),
        Command::Scan => scan(sys, cfg),
    }
}

fn header(cfg: &RunConfig, command: Command) -> Result<serde_json::Map<String, Value>> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command.name()));
    m.insert("config".into(), cfg.resolved()?);
    m.insert("seed".into(), json!(cfg.seed));
    Ok(m)
}

fn verify(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let v = &cfg.verify;
    let expanding = sys.base().verify_expanding(v.expanding_grid)?;
    let k1 = sys.verify_k1(v.k1_grid);
    let k2 = sys.verify_k2(v.k2_grid_theta, v.k2_grid_t)?;
    let k3 = sys.verify_k3()?;
    let measure = cfg.measure.build(sys, v.exponent_grid)?;
    let exponents = check_negative_exponents(sys, &measure, cfg.measure.label())?;
    let passed = expanding.passed && k1.passed && k2.passed && k3.passed && exponents.passed;
    let mut r = header(cfg, Command::Verify)?;
    r.insert("expanding".into(), serde_json::to_value(&expanding)?);
    r.insert("k1".into(), serde_json::to_value(&k1)?);
    r.insert("k2".into(), serde_json::to_value(&k2)?);
    r.insert("k3".into(), serde_json::to_value(&k3)?);
    r.insert("exponents".into(), serde_json::to_value(&exponents)?);
    r.insert("passed".into(), json!(passed));
    let mut a = Artifacts::new();
    a.add_json("verify.json", &Value::Object(r))?;
    Ok((a, passed))
}

fn basin(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let b = &cfg.basin;
    let params = b.params();
    let r = raster(sys, b.width, b.height, &params, cfg.workers)?;
    let im = intermingled_test(&r, b.coarse_cols, b.coarse_rows).ok();
    let cov = coverage_curve(sys, b.coverage_samples, &b.coverage_ns, &params, cfg.seed, cfg.workers)?;
    let mut s = header(cfg, Command::Basin)?;
    s.insert("width".into(), json!(r.width));
    s.insert("height".into(), json!(r.height));
    s.insert("params".into(), serde_json::to_value(params)?);
    s.insert("fractions".into(), serde_json::to_value(r.fractions)?);
    s.insert("encoding".into(), json!({"BASIN0": 0, "BASIN1": 255, "UNDECIDED": 128, "row0": "t = 1"}));
    if sys.has_half_shift_symmetry() && r.width % 2 == 0 {
        s.insert("symmetry_agreement".into(), json!(r.symmetry_agreement()));
    }
    s.insert(
        "intermingled".into(),
        match &im {
            Some(x) => json!({"cols": x.cols, "rows": x.rows, "failed": x.failed, "passed": x.passed}),
            None => Value::Null,
        },
    );
    s.insert("warnings".into(), json!(r.warnings));
    let mut a = Artifacts::new();
    a.add("basin.pgm", r.to_pgm());
    a.add_json("basin.json", &Value::Object(s))?;
    let mut csv = String::from("N,fraction\n");
    for row in &cov {
        let _ = writeln!(csv, "{},{}", row.n, fmt_f64(row.fraction));
    }
    a.add("coverage.csv", csv);
    Ok((a, true))
}

fn sigma_summary(g: &SeparatingGraph) -> Value {
    let (pairs, agree) = g.involution_pairs();
    json!({
        "grid": g.grid,
        "tol": g.tol,
        "decided": g.decided(),
        "mean": g.mean(),
        "involution_pairs": pairs,
        "involution_agree": agree,
        "total_variation": g.total_variation(),
    })
}

fn sigma(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let params = cfg.sigma.params();
    let g = SeparatingGraph::compute(sys, cfg.sigma.grid, &params, cfg.workers)?;
    let mut s = header(cfg, Command::Sigma)?;
    s.insert("summary".into(), sigma_summary(&g));
    if cfg.sigma.refine {
        let fine = SeparatingGraph::compute(sys, 2 * cfg.sigma.grid, &params, cfg.workers)?;
        s.insert("refined".into(), sigma_summary(&fine));
        s.insert(
            "total_variation_ratio".into(),
            json!(fine.total_variation() / g.total_variation()),
        );
    }
    let mut a = Artifacts::new();
    a.add("sigma.csv", g.to_csv());
    a.add_json("sigma.json", &Value::Object(s))?;
    Ok((a, true))
}

fn orbits(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let params = cfg.sigma.params();
    let o = &cfg.orbits;
    let g = SeparatingGraph::compute(sys, cfg.sigma.grid, &params, cfg.workers)?;
    let measure = cfg.measure.build(sys, cfg.sigma.grid)?;
    let est = central_measure_estimate(&g, &measure, &Observable::standard_set())?;
    let reports = o
        .periods
        .iter()
        .map(|&n| interior_periodic_orbits(sys, n, o.cap, Some(&params)))
        .collect::<Result<Vec<_>>>()?;
    let table = periodic_measure_convergence(&reports, &est);
    let to_match: Vec<_> = reports
        .iter()
        .filter(|r| r.n <= o.match_max_period)
        .flat_map(|r| r.orbits.iter().cloned())
        .collect();
    let matches = match_sigma_to_orbits(sys, &to_match, &params, cfg.workers);
    let matched = matches.iter().filter(|m| m.matched).count();
    let all_expanding = reports.iter().flat_map(|r| &r.orbits).all(|x| x.multiplier >= 1.0);

    let mut s = header(cfg, Command::Orbits)?;
    s.insert("sigma".into(), sigma_summary(&g));
    s.insert(
        "central_estimate".into(),
        json!(est
            .observables
            .iter()
            .zip(&est.integrals)
            .map(|(ob, v)| (ob.name(), json!(v)))
            .collect::<serde_json::Map<_, _>>()),
    );
    s.insert("excluded_mass".into(), json!(est.excluded_mass));
    s.insert("gap_slope".into(), json!(table.gap_slope));
    s.insert("positive_from".into(), json!(table.positive_from));
    s.insert("all_multipliers_at_least_one".into(), json!(all_expanding));
    s.insert("sigma_matches".into(), json!({"matched": matched, "total": matches.len()}));
    let mut a = Artifacts::new();
    a.add_json("orbits.json", &reports)?;
    a.add("convergence.csv", table.to_csv());
    let mut mcsv = String::from("theta,period,t,sigma,matched\n");
    for m in &matches {
        let _ = writeln!(
            mcsv,
            "{},{},{},{},{}",
            fmt_f64(m.theta),
            m.period,
            fmt_f64(m.t),
            m.sigma.map_or_else(|| "nan".into(), fmt_f64),
            m.matched
        );
    }
    a.add("sigma_matches.csv", mcsv);
    a.add("sigma.csv", g.to_csv());
    a.add_json("central.json", &Value::Object(s))?;
    Ok((a, all_expanding))
}

fn fits_json(r: &EntropyReport) -> Value {
    json!(r
        .fits
        .iter()
        .map(|f| json!({"epsilon": f.epsilon, "slope": f.slope, "standard_error": f.standard_error}))
        .collect::<Vec<_>>())
}

fn entropy(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let e = &cfg.entropy;
    let base = entropy_estimate(Space::Circle(sys.base()), &e.epsilons, &e.ns)?;
    let full = entropy_estimate(Space::Cylinder(sys), &e.epsilons, &e.ns)?;
    let thetas: Vec<f64> = (0..e.fibers)
        .map(|i| random_point(&mut item_rng(cfg.seed, i as u64)).0)
        .collect();
    let fibers = fiber_entropy_check(sys, &thetas, &e.fiber_ns, e.fiber_epsilon)?;

    // Pressure: reweight the coarsest-ε cylinder sets and fit the growth rate.
    let eps0 = e.epsilons.first().copied().unwrap_or(0.05);
    let sets: Vec<_> = full.estimates.iter().filter(|x| x.epsilon == eps0).collect();
    let mut pressures = Vec::new();
    for phi in &e.potentials {
        let pts: Vec<(f64, f64)> = sets
            .iter()
            .map(|x| (x.n as f64, reweighted_log_sum(Space::Cylinder(sys), x, phi)))
            .collect();
        let (slope, se) = slope_with_error(&pts);
        let transfer = solve_equilibrium(
            sys.base(),
            phi,
            e.pressure_grid,
            crate::ruelle::DEFAULT_TOL,
            crate::ruelle::DEFAULT_MAX_ITER,
        )?
        .pressure;
        let last = sets.last().map(|x| reweighted_log_sum(Space::Cylinder(sys), x, phi) / x.n.max(1) as f64);
        pressures.push(json!({
            "potential": phi,
            "epsilon": eps0,
            "growth_rate": slope,
            "standard_error": se,
            "raw_at_largest_n": last,
            "transfer_operator": transfer,
            "gap": (slope - transfer).abs(),
        }));
    }
    let audits_clean = base
        .estimates
        .iter()
        .chain(&full.estimates)
        .all(|x| x.audit.violations == 0);

    let mut s = header(cfg, Command::Entropy)?;
    s.insert("target".into(), json!(base.target));
    s.insert("base".into(), json!({"fits": fits_json(&base), "epsilon_trend": base.epsilon_trend}));
    s.insert("full".into(), json!({"fits": fits_json(&full), "epsilon_trend": full.epsilon_trend}));
    s.insert("fibers".into(), serde_json::to_value(&fibers)?);
    s.insert("pressure".into(), json!(pressures));
    s.insert("audits_clean".into(), json!(audits_clean));
    let mut a = Artifacts::new();
    a.add("entropy_circle.csv", base.to_csv());
    a.add("entropy_cylinder.csv", full.to_csv());
    let mut fcsv = String::from("theta,n,count\n");
    for row in &fibers.rows {
        for (n, c) in fibers.ns.iter().zip(&row.counts) {
            let _ = writeln!(fcsv, "{},{},{}", fmt_f64(row.theta), n, c);
        }
    }
    a.add("fibers.csv", fcsv);
    a.add_json("entropy.json", &Value::Object(s))?;
    Ok((a, audits_clean && fibers.passed))
}

fn equilibrium(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let e = &cfg.equilibrium;
    let st = solve_equilibrium(sys.base(), &e.potential, e.grid, e.tol, e.max_iter)?;
    let mut s = header(cfg, Command::Equilibrium)?;
    s.insert("potential".into(), serde_json::to_value(&e.potential)?);
    s.insert("grid".into(), json!(st.grid));
    s.insert("pressure".into(), json!(st.pressure));
    s.insert("eigenvalue".into(), json!(st.eigenvalue));
    s.insert("iterations".into(), json!(st.iterations));
    s.insert("weights".into(), json!(st.measure.weights()));
    s.insert("jacobian".into(), json!(st.jacobian));
    let mut a = Artifacts::new();
    a.add_json("equilibrium.json", &Value::Object(s))?;
    Ok((a, true))
}

fn scan(sys: &KanSystem, cfg: &RunConfig) -> Result<(Artifacts, bool)> {
    let measure = cfg.measure.build(sys, cfg.measure_grid)?;
    let r = epsilon_expansion_scan(
        sys.base(),
        &cfg.system.coupling(),
        &cfg.system.profile(),
        &measure,
        &cfg.scan.epsilons,
    )?;
    let mut s = header(cfg, Command::Scan)?;
    s.insert("report".into(), serde_json::to_value(&r)?);
    let mut a = Artifacts::new();
    a.add(
        "scan.csv",
        csv_table(
            &["epsilon", "lambda0", "lambda1"],
            r.rows.iter().map(|x| vec![x.epsilon, x.lambda0, x.lambda1]),
        ),
    );
    a.add_json("scan.json", &Value::Object(s))?;
    Ok((a, r.passed))
}

/// Canonical JSON of the resolved configuration, as embedded in reports.
pub fn resolved_config_json(cfg: &RunConfig) -> Result<String> {
    canonical_json(&cfg.resolved()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["kanlab", "verify", "--seed", "9", "--workers", "2", "--out", "x"]).unwrap();
        assert_eq!(cli.command, Command::Verify);
        let cfg = resolve_config(&cli.common).unwrap();
        assert_eq!((cfg.seed, cfg.workers, cfg.output.as_str()), (9, 2, "x"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["kanlab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["kanlab", "verify", "--config", "/nonexistent/cfg.json"]), EXIT_USAGE);
    }
}
