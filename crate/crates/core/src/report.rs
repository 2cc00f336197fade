//! Domain specifications, run configuration and the commands behind the
//! command-line front end, with their JSON and CSV renderings.
//!
//! A domain file is TOML:
//!
//! ```toml
//! [domain]
//! name = "cardioid-2"
//! source = "disc"
//! convex_hint = false
//!
//! [domain.map]
//! family = "cardioid"
//! k = 2.0
//! ```
//!
//! Compositions list their members outermost first:
//! `composition = [{ family = "radial-power", k = 1.0 }, { family = "moebius", a_re = 0.3, a_im = 0.0 }]`
//! is `radial-power ∘ moebius`.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bounds::{self, optimize_beta, BoundError, EigenBoundReport, Theorem};
use crate::fem::{self, converged_mu1, FemError, SpectrumEstimate};
use crate::maps::{MapError, PlanarMap, Source};
use crate::quadrature::{
    esssup_jacobian, monomials_up_to, regularity_scan, PoincareContext, QuadError, QuadratureGrid,
    RegularityReport, TestFunction,
};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Columns of the sweep table, in order.
pub const SWEEP_COLUMNS: [&str; 10] = [
    "k",
    "K",
    "esssup",
    "beta_star",
    "inv_mu1_upper",
    "mu1_lower",
    "mu1_fem",
    "polya_upper",
    "en2_constant",
    "status",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no admissible exponent: {0}")]
    NoAdmissibleBeta(String),
    #[error("mesh failure: {0}")]
    Mesh(FemError),
    #[error("finite element solver: {0}")]
    Solver(FemError),
    #[error(transparent)]
    Bound(BoundError),
    #[error(transparent)]
    Quadrature(QuadError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit code: 2 no admissible β, 3 parse, 4 mesh failure,
    /// 5 anything else. Code 1 is reserved for a failed sandwich check,
    /// which is a result rather than an error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::NoAdmissibleBeta(_) => 2,
            RunError::Parse(_) => 3,
            RunError::Mesh(_) => 4,
            _ => 5,
        }
    }
}

impl From<BoundError> for RunError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::NoAdmissibleBeta => RunError::NoAdmissibleBeta(e.to_string()),
            BoundError::Quadrature(q) => q.into(),
            BoundError::Map(m) => RunError::Map(m),
            e => RunError::Bound(e),
        }
    }
}

impl From<QuadError> for RunError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::NoAdmissibleBeta => RunError::NoAdmissibleBeta(e.to_string()),
            QuadError::Map(m) => RunError::Map(m),
            e => RunError::Quadrature(e),
        }
    }
}

impl From<FemError> for RunError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::FoldedTriangle { .. }
            | FemError::DegenerateTriangle { .. }
            | FemError::NonManifoldEdge { .. }
            | FemError::BadIndex { .. } => RunError::Mesh(e),
            FemError::Map(m) => RunError::Map(m),
            e => RunError::Solver(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Domain specification
// ---------------------------------------------------------------------------

/// Map part of a domain specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    RadialPower {
        k: f64,
    },
    Cardioid {
        k: f64,
    },
    Moebius {
        a_re: f64,
        a_im: f64,
        #[serde(default)]
        theta: f64,
    },
    Composition {
        composition: Vec<MapSpec>,
    },
}

impl MapSpec {
    /// Family names accepted on the command line.
    pub const FAMILIES: [&'static str; 5] =
        ["identity", "radial-power", "cardioid", "moebius", "composition"];

    /// A one-parameter family member from its command-line name.
    pub fn from_family(family: &str, k: Option<f64>) -> Result<Self, RunError> {
        let need_k = || k.ok_or_else(|| RunError::Parse(format!("family {family} needs --k")));
        match family {
            "identity" => Ok(MapSpec::Identity),
            "radial-power" => Ok(MapSpec::RadialPower { k: need_k()? }),
            "cardioid" => Ok(MapSpec::Cardioid { k: need_k()? }),
            "moebius" | "composition" => Err(RunError::Parse(format!(
                "family {family} needs extra parameters; use the dedicated flags or a spec file"
            ))),
            other => Err(RunError::Parse(format!(
                "unknown family {other:?}; expected one of {}",
                Self::FAMILIES.join(", ")
            ))),
        }
    }

    pub fn build(&self, source: Source) -> Result<PlanarMap, MapError> {
        match self {
            MapSpec::Identity => Ok(PlanarMap::identity(source)),
            MapSpec::RadialPower { k } => PlanarMap::radial_power(*k, source),
            MapSpec::Cardioid { k } => disc_only(source, "cardioid").and(PlanarMap::cardioid(*k)),
            MapSpec::Moebius { a_re, a_im, theta } => disc_only(source, "moebius")
                .and(PlanarMap::moebius(Complex64::new(*a_re, *a_im), *theta)),
            MapSpec::Composition { composition } => {
                let members = composition
                    .iter()
                    .map(|m| m.build(source))
                    .collect::<Result<Vec<_>, _>>()?;
                PlanarMap::compose(members)
            }
        }
    }

    fn is_disc_automorphism(&self) -> bool {
        match self {
            MapSpec::Identity | MapSpec::Moebius { .. } => true,
            MapSpec::RadialPower { k } => *k == 0.0,
            MapSpec::Cardioid { .. } => false,
            MapSpec::Composition { composition } => {
                composition.iter().all(MapSpec::is_disc_automorphism)
            }
        }
    }
}

fn disc_only(source: Source, family: &str) -> Result<(), MapError> {
    if source == Source::UnitDisc {
        Ok(())
    } else {
        Err(MapError::InvalidParameter(format!(
            "{family} is defined on the disc only"
        )))
    }
}

/// A domain `Ω = φ(source)` with optional geometric hints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    #[serde(default = "default_source")]
    pub source: Source,
    /// Caller vouches that the image domain is convex.
    #[serde(default)]
    pub convex_hint: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_hint: Option<f64>,
    pub map: MapSpec,
}

fn build_checked(map: &MapSpec, source: Source) -> Result<PlanarMap, RunError> {
    map.build(source).map_err(|e| match e {
        MapError::InvalidParameter(m) => RunError::Parse(m),
        e => e.into(),
    })
}

fn default_source() -> Source {
    Source::UnitDisc
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    domain: DomainSpec,
}

impl DomainSpec {
    /// Spec for `map` on `source`, named after the map. Maps that are
    /// automorphisms of the disc, and the identity on the square, get the
    /// convex hint and diameter 2.
    pub fn new(map: MapSpec, source: Source) -> Result<Self, RunError> {
        let built = build_checked(&map, source)?;
        let convex = map.is_disc_automorphism();
        Ok(DomainSpec {
            name: format!("{}-{}", built.describe(), source),
            source,
            convex_hint: convex,
            diameter_hint: convex.then_some(2.0),
            map,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let file: DomainFile = toml::from_str(text).map_err(|e| RunError::Parse(e.to_string()))?;
        file.domain.map()?;
        Ok(file.domain)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&DomainFile {
            domain: self.clone(),
        })
        .expect("domain specs always serialize")
    }

    /// The map, with invalid parameters reported as parse errors.
    pub fn map(&self) -> Result<PlanarMap, RunError> {
        build_checked(&self.map, self.source)
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub beta_max: f64,
    pub quadrature_level: u32,
    pub fem_levels: RangeInclusive<u32>,
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Run the finite-element oracle where a command supports it.
    pub verify: bool,
    /// Attach Payne–Weinberger and the competing constant to bound reports.
    pub baselines: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            beta_max: 64.0,
            quadrature_level: 1,
            fem_levels: 2..=4,
            json: None,
            csv: None,
            verify: false,
            baselines: false,
        }
    }
}

/// Parses `A..B` or `A..=B`, both inclusive.
pub fn parse_levels(text: &str) -> Result<RangeInclusive<u32>, RunError> {
    let bad = || RunError::Parse(format!("bad level range {text:?}; expected A..B"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    if b <= a {
        return Err(RunError::Parse(format!(
            "level range {text:?} needs at least two levels"
        )));
    }
    Ok(a..=b)
}

/// Parses `A..B` (inclusive) or a comma-separated list of `k` values.
pub fn parse_k_values(text: &str) -> Result<Vec<f64>, RunError> {
    let bad = || RunError::Parse(format!("bad k range {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        Ok((a..=b).map(|k| k as f64).collect())
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Result of the bound pipeline.
#[derive(Debug, Clone)]
pub struct BoundRun {
    pub domain: String,
    pub report: EigenBoundReport,
    pub regularity: RegularityReport,
}

/// Distortion, regularity scan, β optimization and baselines.
pub fn cmd_bound(spec: &DomainSpec, config: &RunConfig) -> Result<BoundRun, RunError> {
    let map = spec.map()?;
    let grid = QuadratureGrid::for_map(&map, config.quadrature_level);
    let regularity = regularity_scan(&map, &[1.0, 2.0, 4.0, f64::INFINITY], &grid)?;
    let report = optimize_beta(&map, &grid, config.beta_max)?;
    let diameter = if config.baselines && spec.convex_hint {
        spec.diameter_hint
    } else {
        None
    };
    let competing = config.baselines.then_some(2.0);
    let mut report = report.with_baselines(regularity.image_area, diameter, competing);
    if config.baselines {
        report.diagnostics.push(
            "vv_constant is a competing estimate for star domains, reported for comparison only"
                .into(),
        );
    }
    if regularity.astala_limit.is_finite() {
        report.diagnostics.push(format!(
            "derivative integrability threshold K/(K-1) = {:.6}",
            regularity.astala_limit
        ));
    }
    Ok(BoundRun {
        domain: spec.name.clone(),
        report,
        regularity,
    })
}

/// Finite-element oracle over the configured levels.
pub fn cmd_oracle(spec: &DomainSpec, config: &RunConfig) -> Result<SpectrumEstimate, RunError> {
    Ok(converged_mu1(&spec.map()?, config.fem_levels.clone())?)
}

/// Outcome of `mu1_lower ≤ μ₁ ≤ polya_upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub mu1_lower: f64,
    pub mu1_fem: f64,
    /// Uncertainty of `mu1_fem`; the hard check allows it.
    pub fem_error: f64,
    pub polya_upper: f64,
    /// `mu1_lower ≤ mu1_fem + fem_error`.
    pub hard_pass: bool,
    /// `mu1_fem − fem_error ≤ polya_upper`; advisory.
    pub polya_pass: bool,
    pub ratio: f64,
}

impl Sandwich {
    pub fn new(report: &EigenBoundReport, oracle: &SpectrumEstimate) -> Self {
        let mu1_fem = oracle.best_mu1();
        let fem_error = oracle.error_estimate();
        let polya_upper = report.baselines.polya_upper.unwrap_or(f64::INFINITY);
        Sandwich {
            mu1_lower: report.mu1_lower,
            mu1_fem,
            fem_error,
            polya_upper,
            hard_pass: report.mu1_lower <= mu1_fem + fem_error,
            polya_pass: mu1_fem - fem_error <= polya_upper,
            ratio: report.mu1_lower / mu1_fem,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareRun {
    pub bound: BoundRun,
    pub oracle: SpectrumEstimate,
    pub sandwich: Sandwich,
}

/// Bound and oracle for the same domain, joined by the sandwich check.
pub fn cmd_compare(spec: &DomainSpec, config: &RunConfig) -> Result<CompareRun, RunError> {
    let config = RunConfig {
        baselines: true,
        ..config.clone()
    };
    let bound = cmd_bound(spec, &config)?;
    let oracle = cmd_oracle(spec, &config)?;
    let sandwich = Sandwich::new(&bound.report, &oracle);
    Ok(CompareRun {
        bound,
        oracle,
        sandwich,
    })
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub distortion: f64,
    pub esssup: f64,
    pub beta_star: f64,
    pub inv_mu1_upper: f64,
    pub mu1_lower: f64,
    pub mu1_fem: Option<f64>,
    pub polya_upper: f64,
    pub en2_constant: f64,
    pub status: String,
}

impl SweepRow {
    fn failed(k: f64, error: &RunError) -> Self {
        SweepRow {
            k,
            distortion: f64::NAN,
            esssup: f64::NAN,
            beta_star: f64::NAN,
            inv_mu1_upper: f64::NAN,
            mu1_lower: f64::NAN,
            mu1_fem: None,
            polya_upper: f64::NAN,
            en2_constant: bounds::vv_competing_bound(2.0),
            status: format!("error: {error}"),
        }
    }
}

/// Bound (and, with `verify`, oracle) for each `k`. Rows are computed in
/// parallel and returned in input order; a failing row records its error.
pub fn cmd_sweep(family: &str, ks: &[f64], source: Source, config: &RunConfig) -> Vec<SweepRow> {
    ks.par_iter()
        .map(|&k| sweep_row(family, k, source, config).unwrap_or_else(|e| SweepRow::failed(k, &e)))
        .collect()
}

fn sweep_row(family: &str, k: f64, source: Source, config: &RunConfig) -> Result<SweepRow, RunError> {
    let spec = DomainSpec::new(MapSpec::from_family(family, Some(k))?, source)?;
    let map = spec.map()?;
    let grid = QuadratureGrid::for_map(&map, config.quadrature_level);
    let report = optimize_beta(&map, &grid, config.beta_max)?;
    let esssup = esssup_jacobian(&map, &grid)?.value;
    let area = crate::quadrature::lbeta_jacobian_norm(&map, 1.0, &grid)?.value;
    let report = report.with_baselines(area, None, None);
    let (mu1_fem, status) = if config.verify {
        let oracle = cmd_oracle(&spec, config)?;
        let sandwich = Sandwich::new(&report, &oracle);
        let status = if sandwich.hard_pass { "ok" } else { "sandwich_violation" };
        (Some(sandwich.mu1_fem), status)
    } else {
        (None, "ok")
    };
    Ok(SweepRow {
        k,
        distortion: report.k,
        esssup,
        beta_star: report.beta,
        inv_mu1_upper: report.inv_mu1_upper,
        mu1_lower: report.mu1_lower,
        mu1_fem,
        polya_upper: report.baselines.polya_upper.unwrap_or(f64::NAN),
        en2_constant: bounds::vv_competing_bound(2.0),
        status: status.into(),
    })
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| RunError::Io(std::io::Error::other(e));
    w.write_record(SWEEP_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record([
            plain(r.k),
            plain(r.distortion),
            plain(r.esssup),
            plain(r.beta_star),
            plain(r.inv_mu1_upper),
            plain(r.mu1_lower),
            r.mu1_fem.map(plain).unwrap_or_default(),
            plain(r.polya_upper),
            plain(r.en2_constant),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// One numerical Poincaré check against one test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareRow {
    pub kind: &'static str,
    pub exponent: f64,
    pub function: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub beta: Option<f64>,
    pub pass: bool,
}

/// Tolerance on `lhs / rhs` for a Poincaré check to pass.
pub const POINCARE_SLACK: f64 = 1e-6;

/// Weighted (`r ∈ {2, 4}`) and unweighted (`s ∈ {1, 2, 4}`) checks over all
/// monomials of degree at most 3. Exponents without a constant for the
/// source are skipped.
pub fn cmd_verify_poincare(spec: &DomainSpec, config: &RunConfig) -> Result<Vec<PoincareRow>, RunError> {
    let map = spec.map()?;
    let grid = QuadratureGrid::for_map(&map, config.quadrature_level);
    let ctx = PoincareContext::new(&map, &grid)?;
    let monomials = monomials_up_to(3);
    let mut rows = Vec::new();
    let cases = [2.0, 4.0]
        .into_iter()
        .map(|e| ("weighted", e))
        .chain([1.0, 2.0, 4.0].into_iter().map(|e| ("unweighted", e)));
    for (kind, exponent) in cases {
        if spec.source == Source::CenteredSquare && exponent != 2.0 {
            continue;
        }
        let constant = match kind {
            "unweighted" => Some(ctx.unweighted_constant(exponent)?),
            _ => None,
        };
        for m in &monomials {
            let f: &dyn TestFunction = m;
            let check = match constant {
                Some(c) => ctx.unweighted_with(f, exponent, c)?,
                None => ctx.weighted(f, exponent)?,
            };
            rows.push(PoincareRow {
                kind,
                exponent,
                function: m.to_string(),
                lhs: check.lhs,
                rhs: check.rhs,
                ratio: check.ratio,
                beta: check.beta,
                pass: check.ratio <= 1.0 + POINCARE_SLACK,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

/// JSON number with 12 significant digits; infinities become the strings
/// `"inf"` / `"-inf"` and NaN becomes `null`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x.is_infinite() {
        Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        json!(round12(x))
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Plain-text number for CSV cells, 12 significant digits.
fn plain(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        round12(x).to_string()
    }
}

/// `x` with 6 significant digits, for tables meant for people.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return plain(x);
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        format!("{:.*}", (5 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn theorem_name(t: Theorem) -> &'static str {
    match t {
        Theorem::FiniteBeta => "A_finite_beta",
        Theorem::InfiniteBeta => "Infty_beta",
        Theorem::SquareSource => "Square_source",
    }
}

/// Bound report in the fixed JSON layout.
pub fn bound_json(domain: &str, r: &EigenBoundReport) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "domain": domain,
        "theorem": theorem_name(r.theorem),
        "K": num(r.k),
        "beta": num(r.beta),
        "norm": num(r.jacobian_norm),
        "constant": {
            "r": num(r.poincare_constant.r),
            "value": num(r.poincare_constant.value),
            "kind": format!("{:?}", r.poincare_constant.kind),
        },
        "inv_mu1_upper": num(r.inv_mu1_upper),
        "mu1_lower": num(r.mu1_lower),
        "poincare_bound": num(r.poincare_bound()),
        "baselines": {
            "polya_upper": opt(r.baselines.polya_upper),
            "payne_weinberger_lower": opt(r.baselines.payne_weinberger_lower),
            "vv_constant": opt(r.baselines.vv_constant),
        },
        "checksum_ok": r.checksum_ok,
        "consistent": r.is_consistent(),
        "diagnostics": r.diagnostics,
    })
}

pub fn spectrum_json(e: &SpectrumEstimate) -> Value {
    let levels: Vec<Value> = e
        .levels
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "dof": l.dof,
                "triangles": l.triangles,
                "area": num(l.area),
                "min_angle": num(l.min_angle),
                "mu0": num(l.mu0),
                "mu1": num(l.mu1),
                "solver": l.solver,
            })
        })
        .collect();
    let extrapolated = match &e.extrapolated_mu1 {
        Some(x) => json!({
            "value": num(x.value),
            "error": num(x.error),
            "observed_order": opt(x.observed_order),
        }),
        None => Value::Null,
    };
    json!({
        "eigenvalues": e.eigenvalues.iter().copied().map(num).collect::<Vec<_>>(),
        "residuals": e.residuals.iter().copied().map(num).collect::<Vec<_>>(),
        "dof": e.dof,
        "mesh_level": e.mesh_level,
        "solver": e.solver,
        "extrapolated_mu1": extrapolated,
        "status": e.status,
        "mu1": num(e.best_mu1()),
        "mu1_error": num(e.error_estimate()),
        "levels": levels,
    })
}

pub fn oracle_json(domain: &str, e: &SpectrumEstimate) -> Value {
    let mut v = Map::new();
    v.insert("schema_version".into(), json!(SCHEMA_VERSION));
    v.insert("domain".into(), json!(domain));
    v.insert("spectrum".into(), spectrum_json(e));
    Value::Object(v)
}

pub fn compare_json(run: &CompareRun) -> Value {
    let s = &run.sandwich;
    json!({
        "schema_version": SCHEMA_VERSION,
        "domain": run.bound.domain,
        "bound": bound_json(&run.bound.domain, &run.bound.report),
        "oracle": spectrum_json(&run.oracle),
        "sandwich": {
            "mu1_lower": num(s.mu1_lower),
            "mu1_fem": num(s.mu1_fem),
            "fem_error": num(s.fem_error),
            "polya_upper": num(s.polya_upper),
            "ratio": num(s.ratio),
            "hard_pass": s.hard_pass,
            "polya_pass": s.polya_pass,
        },
        "en1_constant": num(run.bound.report.poincare_bound()),
        "en2_constant": num(bounds::vv_competing_bound(2.0)),
    })
}

pub fn poincare_json(domain: &str, rows: &[PoincareRow]) -> Value {
    let checks: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "kind": r.kind,
                "exponent": num(r.exponent),
                "function": r.function,
                "lhs": num(r.lhs),
                "rhs": num(r.rhs),
                "ratio": num(r.ratio),
                "beta": opt(r.beta),
                "pass": r.pass,
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "domain": domain,
        "all_pass": rows.iter().all(|r| r.pass),
        "checks": checks,
    })
}

pub fn bound_summary(run: &BoundRun) -> String {
    let r = &run.report;
    let mut out = String::new();
    let _ = writeln!(out, "domain         {}", run.domain);
    let _ = writeln!(out, "theorem        {}", theorem_name(r.theorem));
    let _ = writeln!(out, "K              {}", sig6(r.k));
    let _ = writeln!(out, "beta           {}", sig6(r.beta));
    let _ = writeln!(out, "norm           {}", sig6(r.jacobian_norm));
    let _ = writeln!(out, "constant       {}", sig6(r.poincare_constant.value));
    let _ = writeln!(out, "1/mu1 <=       {}", sig6(r.inv_mu1_upper));
    let _ = writeln!(out, "mu1 >=         {}", sig6(r.mu1_lower));
    if let Some(p) = r.baselines.polya_upper {
        let _ = writeln!(out, "polya_upper    {}", sig6(p));
    }
    if let Some(p) = r.baselines.payne_weinberger_lower {
        let _ = writeln!(out, "payne_weinb.   {}", sig6(p));
    }
    if let Some(p) = r.baselines.vv_constant {
        let _ = writeln!(out, "vv_constant    {}", sig6(p));
    }
    out
}

pub fn oracle_summary(e: &SpectrumEstimate) -> String {
    let mut out = fem::level_table(e);
    let _ = writeln!(
        out,
        "mu1 = {} ± {} ({:?})",
        sig6(e.best_mu1()),
        sig6(e.error_estimate()),
        e.status
    );
    out
}

pub fn compare_summary(run: &CompareRun) -> String {
    let s = &run.sandwich;
    let mut out = bound_summary(&run.bound);
    out.push_str(&oracle_summary(&run.oracle));
    let _ = writeln!(
        out,
        "sandwich       {} <= {} ± {} <= {}   hard: {}   polya: {}",
        sig6(s.mu1_lower),
        sig6(s.mu1_fem),
        sig6(s.fem_error),
        sig6(s.polya_upper),
        if s.hard_pass { "pass" } else { "FAIL" },
        if s.polya_pass { "pass" } else { "advisory-fail" },
    );
    out
}
