//! Tensor-product quadrature on the unit disc and the centered square, and
//! the integral quantities built from it: `L_beta` norms and essential
//! suprema of jacobians, image areas, regularity scans, and numerical checks
//! of the weighted and unweighted Poincaré–Sobolev inequalities.
//!
//! Disc rules are Gauss–Legendre in the radius (the polar weight `r` is
//! folded into the weights) times the trapezoid rule in the angle; square
//! rules are Gauss–Legendre per axis. All sums are pairwise, in node order,
//! so results do not depend on the number of worker threads.

use std::fmt;
use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{self, PoincareConstant};
use crate::maps::{MapError, PlanarMap, Source};
use crate::search::{scan_then_golden, ternary_search};

const BASE_RADIAL: usize = 128;
const BASE_ANGULAR: usize = 256;
const BASE_SQUARE: usize = 192;

/// Relative difference between two levels above which a norm is reported
/// as not converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-4;
/// Relative difference that still persists after three refinements marks a
/// probe as divergent.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-2;
const DIVERGENCE_REFINEMENTS: u32 = 3;

/// Fraction by which the angular step shrinks at a graded focus angle.
const GRADING_STRENGTH: f64 = 0.5;

/// Search interval for exponents `beta`.
pub const BETA_MIN: f64 = 1.001;
pub const BETA_MAX_DEFAULT: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand is not finite at {z}")]
    NonFiniteIntegrand { z: Complex64 },
    #[error("integral did not converge: level values {coarse} and {fine}")]
    NotConverged { coarse: f64, fine: f64 },
    #[error("integral diverges under refinement (last levels {coarse} and {fine})")]
    Divergent { coarse: f64, fine: f64 },
    #[error("exponent {0} is outside the admissible range")]
    InvalidExponent(f64),
    #[error("no probed exponent beta gives a finite jacobian norm")]
    NoAdmissibleBeta,
    #[error("no Poincaré constant is available for this source and exponent {0}")]
    UnsupportedSource(f64),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One-dimensional rule: abscissae and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// Gauss–Legendre rule with `n` nodes on `[a, b]`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1D {
            points: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|v| half * v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence. Nodes are ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let weight = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p, dp)
}

/// Quadrature node: point and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub z: Complex64,
    pub weight: f64,
}

/// Tensor-product rule over a source domain.
///
/// For the disc the first factor is radial and the second angular; for the
/// square both factors are Gauss–Legendre rules along the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    source: Source,
    level: u32,
    first: Rule1D,
    second: Rule1D,
    focus_angle: Option<f64>,
}

impl QuadratureGrid {
    /// Grid at refinement `level`; node counts double per level from
    /// 128 × 256 on the disc and 192 × 192 on the square.
    pub fn new(source: Source, level: u32) -> Self {
        Self::build(source, level, None)
    }

    /// Grid suited to `map`: the angular sampling is doubled around the
    /// preimage of a boundary cusp, if the map has one.
    pub fn for_map(map: &PlanarMap, level: u32) -> Self {
        let focus = match map.source() {
            Source::UnitDisc => map.cusp_preimage().map(|z| z.arg()),
            Source::CenteredSquare => None,
        };
        Self::build(map.source(), level, focus)
    }

    /// Disc grid with explicit radial × angular counts, or square grid with
    /// `first × second` Gauss points. Mostly useful for cheap checks.
    pub fn with_counts(source: Source, first: usize, second: usize) -> Self {
        let (f, s) = Self::rules(source, first, second, None);
        QuadratureGrid {
            source,
            level: 0,
            first: f,
            second: s,
            focus_angle: None,
        }
    }

    fn build(source: Source, level: u32, focus_angle: Option<f64>) -> Self {
        let scale = 1usize << level;
        let (a, b) = match source {
            Source::UnitDisc => (BASE_RADIAL * scale, BASE_ANGULAR * scale),
            Source::CenteredSquare => (BASE_SQUARE * scale, BASE_SQUARE * scale),
        };
        let (first, second) = Self::rules(source, a, b, focus_angle);
        QuadratureGrid {
            source,
            level,
            first,
            second,
            focus_angle,
        }
    }

    fn rules(source: Source, a: usize, b: usize, focus: Option<f64>) -> (Rule1D, Rule1D) {
        match source {
            Source::UnitDisc => {
                let mut radial = Rule1D::gauss_legendre(a, 0.0, 1.0);
                for (w, r) in radial.weights.iter_mut().zip(&radial.points) {
                    *w *= r;
                }
                (radial, angular_rule(b, focus))
            }
            Source::CenteredSquare => {
                let h = Source::SQUARE_HALF_SIDE;
                (
                    Rule1D::gauss_legendre(a, -h, h),
                    Rule1D::gauss_legendre(b, -h, h),
                )
            }
        }
    }

    /// The next dyadic level, keeping any angular grading.
    pub fn refine(&self) -> Self {
        let (first, second) = Self::rules(
            self.source,
            2 * self.first.len(),
            2 * self.second.len(),
            self.focus_angle,
        );
        QuadratureGrid {
            source: self.source,
            level: self.level + 1,
            first,
            second,
            focus_angle: self.focus_angle,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Radial node count (disc) or first-axis node count (square).
    pub fn radial_nodes(&self) -> usize {
        self.first.len()
    }

    /// Angular node count (disc) or second-axis node count (square).
    pub fn angular_nodes(&self) -> usize {
        self.second.len()
    }

    pub fn len(&self) -> usize {
        self.first.len() * self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, index: usize) -> QuadNode {
        let m = self.second.len();
        let (i, j) = (index / m, index % m);
        let (a, b) = (self.first.points[i], self.second.points[j]);
        let z = match self.source {
            Source::UnitDisc => Complex64::from_polar(a, b),
            Source::CenteredSquare => Complex64::new(a, b),
        };
        QuadNode {
            z,
            weight: self.first.weights[i] * self.second.weights[j],
        }
    }

    /// Materialized node list.
    pub fn nodes(&self) -> Vec<QuadNode> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(
            &(0..self.len())
                .map(|k| self.node(k).weight)
                .collect::<Vec<_>>(),
        )
    }

    /// Points on the boundary of the source at `factor` times the grid's
    /// angular (disc) or per-axis (square) density.
    pub fn boundary_samples(&self, factor: usize) -> Vec<Complex64> {
        match self.source {
            Source::UnitDisc => {
                let m = factor * self.second.len();
                (0..m)
                    .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64))
                    .collect()
            }
            Source::CenteredSquare => {
                let m = factor * self.second.len();
                let h = Source::SQUARE_HALF_SIDE;
                let mut out = Vec::with_capacity(4 * m);
                for j in 0..m {
                    let t = -h + 2.0 * h * j as f64 / m as f64;
                    out.push(Complex64::new(t, -h));
                    out.push(Complex64::new(h, t));
                    out.push(Complex64::new(-t, h));
                    out.push(Complex64::new(-h, -t));
                }
                out
            }
        }
    }

    /// Evaluates `f` at every node, in node order.
    pub fn map_nodes<T, E>(&self, f: impl Fn(QuadNode) -> Result<T, E> + Sync) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
    {
        (0..self.len())
            .into_par_iter()
            .map(|k| f(self.node(k)))
            .collect()
    }

    /// Dumps `x,y,weight` lines.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "x,y,weight")?;
        for k in 0..self.len() {
            let n = self.node(k);
            writeln!(out, "{:.17e},{:.17e},{:.17e}", n.z.re, n.z.im, n.weight)?;
        }
        Ok(())
    }
}

/// Trapezoid rule on `[0, 2 pi)`. With a focus angle the nodes come from the
/// smooth periodic substitution `theta = t - s sin(t - focus)`, which halves
/// the spacing at the focus and keeps the rule spectrally accurate.
fn angular_rule(m: usize, focus: Option<f64>) -> Rule1D {
    let dt = 2.0 * PI / m as f64;
    let ts = (0..m).map(|j| j as f64 * dt);
    match focus {
        None => Rule1D {
            points: ts.collect(),
            weights: vec![dt; m],
        },
        Some(phi) => {
            let s = GRADING_STRENGTH;
            let (points, weights) = ts
                .map(|t| (t - s * (t - phi).sin(), dt * (1.0 - s * (t - phi).cos())))
                .unzip();
            Rule1D { points, weights }
        }
    }
}

/// Pairwise summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Quadrature of `f` over the grid's source domain.
pub fn integrate(
    grid: &QuadratureGrid,
    f: impl Fn(Complex64) -> f64 + Sync,
) -> Result<f64, QuadError> {
    let terms = grid.map_nodes(|n| {
        let v = f(n.z);
        if v.is_finite() {
            Ok(n.weight * v)
        } else {
            Err(QuadError::NonFiniteIntegrand { z: n.z })
        }
    })?;
    Ok(pairwise_sum(&terms))
}

/// Integral value with the difference to the next level as error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Integrates on `grid` and on its refinement; reports the finer value.
pub fn integrate_refined(
    grid: &QuadratureGrid,
    f: impl Fn(Complex64) -> f64 + Sync,
) -> Result<Estimate, QuadError> {
    let coarse = integrate(grid, &f)?;
    let fine = integrate(&grid.refine(), &f)?;
    Ok(Estimate {
        value: fine,
        error: (fine - coarse).abs(),
    })
}

/// Jacobian values of a map at every node of one grid, for evaluating many
/// norms without re-sampling.
#[derive(Debug, Clone)]
pub struct JacobianField {
    weights: Vec<f64>,
    values: Vec<f64>,
    max: f64,
    min: f64,
}

impl JacobianField {
    pub fn sample(map: &PlanarMap, grid: &QuadratureGrid) -> Result<Self, QuadError> {
        let pairs = grid.map_nodes(|n| -> Result<(f64, f64), QuadError> {
            let j = map.jacobian(n.z)?;
            if !j.is_finite() {
                return Err(QuadError::NonFiniteIntegrand { z: n.z });
            }
            if j < 0.0 {
                return Err(MapError::DegenerateJacobian {
                    z: n.z,
                    jacobian: j,
                }
                .into());
            }
            Ok((n.weight, j))
        })?;
        let (weights, values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let max = values.iter().copied().fold(0.0, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(JacobianField {
            weights,
            values,
            max,
            min,
        })
    }

    /// `(sum w J^beta)^(1/beta)`, scaled by the maximum to avoid overflow.
    pub fn lbeta(&self, beta: f64) -> f64 {
        if beta.is_infinite() {
            return self.max;
        }
        if self.max == 0.0 {
            return 0.0;
        }
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, j)| w * (j / self.max).powf(beta))
            .collect();
        self.max * pairwise_sum(&terms).powf(1.0 / beta)
    }

    /// Integral of `J^e`; infinite when `e < 0` and some node has `J = 0`.
    pub fn power_integral(&self, e: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, j)| w * j.powf(e))
            .collect();
        pairwise_sum(&terms)
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn min(&self) -> f64 {
        self.min
    }
}

/// `L_beta` norm estimate from two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub error: f64,
    pub coarse: f64,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `(∫ |J|^beta)^(1/beta)` over the source, on `grid` and its refinement.
/// Fails with [`QuadError::NotConverged`] when the levels differ by more
/// than [`CONVERGENCE_TOLERANCE`] relative.
pub fn lbeta_jacobian_norm(
    map: &PlanarMap,
    beta: f64,
    grid: &QuadratureGrid,
) -> Result<NormEstimate, QuadError> {
    if !(beta >= 1.0) || beta.is_infinite() {
        return Err(QuadError::InvalidExponent(beta));
    }
    let coarse = JacobianField::sample(map, grid)?.lbeta(beta);
    let fine = JacobianField::sample(map, &grid.refine())?.lbeta(beta);
    if !(coarse.is_finite() && fine.is_finite()) {
        return Err(QuadError::NotConverged { coarse, fine });
    }
    if relative_gap(coarse, fine) > CONVERGENCE_TOLERANCE {
        return Err(QuadError::NotConverged { coarse, fine });
    }
    Ok(NormEstimate {
        value: fine,
        error: (fine - coarse).abs(),
        coarse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SupKind {
    Analytic,
    Sampled,
}

/// Essential supremum of `|J|`; `bounded == false` is the infinity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Esssup {
    pub value: f64,
    pub bounded: bool,
    pub kind: SupKind,
}

/// Closed-form supremum of the jacobian over the closed source, for builtin
/// families.
pub fn analytic_esssup(map: &PlanarMap) -> Option<f64> {
    use crate::maps::Family::*;
    match map.family() {
        Identity => Some(1.0),
        // max |z| = 1 on both the closed disc and the inscribed square
        RadialPower { k } => Some(k + 1.0),
        CardioidPower { k } => Some(16.0 * k),
        Moebius { a, .. } => {
            let r = a.norm();
            Some(((1.0 + r) / (1.0 - r)).powi(2))
        }
        _ => None,
    }
}

/// Closed-form infimum of the jacobian over the closed source.
pub fn analytic_infimum(map: &PlanarMap) -> Option<f64> {
    use crate::maps::Family::*;
    match map.family() {
        Identity => Some(1.0),
        RadialPower { k } => Some(if *k == 0.0 { 1.0 } else { 0.0 }),
        CardioidPower { .. } => Some(0.0),
        Moebius { a, .. } => {
            let r = a.norm();
            Some(((1.0 - r) / (1.0 + r)).powi(2))
        }
        _ => None,
    }
}

/// Largest (or smallest) `|J|` over the grid nodes and boundary samples.
fn sampled_extreme(
    map: &PlanarMap,
    grid: &QuadratureGrid,
    largest: bool,
) -> Result<f64, QuadError> {
    let field = JacobianField::sample(map, grid)?;
    let mut best = if largest { field.max } else { field.min };
    for z in grid.boundary_samples(4) {
        let j = map.jacobian(z)?;
        if !j.is_finite() {
            return Err(QuadError::NonFiniteIntegrand { z });
        }
        best = if largest {
            best.max(j.abs())
        } else {
            best.min(j.abs())
        };
    }
    Ok(best)
}

/// Essential supremum of `|J|`. Builtin families use their analytic maximum;
/// other maps take the maximum over nodes and boundary samples on the grid
/// and one refinement, refining once more when the value keeps growing.
pub fn esssup_jacobian(map: &PlanarMap, grid: &QuadratureGrid) -> Result<Esssup, QuadError> {
    if let Some(value) = analytic_esssup(map) {
        return Ok(Esssup {
            value,
            bounded: true,
            kind: SupKind::Analytic,
        });
    }
    let s0 = sampled_extreme(map, grid, true)?;
    let g1 = grid.refine();
    let s1 = sampled_extreme(map, &g1, true)?;
    let bounded = if s1 <= s0 * (1.0 + DIVERGENCE_TOLERANCE) {
        true
    } else {
        let s2 = sampled_extreme(map, &g1.refine(), true)?;
        let grew = s2 > s1 * (1.0 + DIVERGENCE_TOLERANCE);
        if !grew {
            return Ok(Esssup {
                value: s2.max(s1),
                bounded: true,
                kind: SupKind::Sampled,
            });
        }
        false
    };
    Ok(Esssup {
        value: if bounded { s0.max(s1) } else { f64::INFINITY },
        bounded,
        kind: SupKind::Sampled,
    })
}

/// Infimum of `J` over the closed source (analytic for builtin families).
pub fn infimum_jacobian(map: &PlanarMap, grid: &QuadratureGrid) -> Result<f64, QuadError> {
    if let Some(v) = analytic_infimum(map) {
        return Ok(v);
    }
    let m0 = sampled_extreme(map, grid, false)?;
    let m1 = sampled_extreme(map, &grid.refine(), false)?;
    Ok(m0.min(m1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeStatus {
    Converged,
    /// Levels still differ by more than the convergence tolerance but not by
    /// the divergence threshold.
    Unresolved,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaProbe {
    pub beta: f64,
    pub norm: f64,
    pub status: ProbeStatus,
}

impl BetaProbe {
    pub fn converged(&self) -> bool {
        self.status == ProbeStatus::Converged
    }
}

/// Regularity summary of a map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub k: f64,
    pub beta_probes: Vec<BetaProbe>,
    pub esssup: Esssup,
    pub image_area: f64,
    /// Integrability threshold `K/(K-1)` for derivatives of K-quasiconformal
    /// maps; advisory only, infinite for conformal maps.
    pub astala_limit: f64,
}

/// Probes the `L_beta` norm of the jacobian at each requested exponent
/// (`f64::INFINITY` probes the essential supremum).
pub fn regularity_scan(
    map: &PlanarMap,
    betas: &[f64],
    grid: &QuadratureGrid,
) -> Result<RegularityReport, QuadError> {
    if betas.is_empty() {
        return Err(QuadError::InvalidExponent(f64::NAN));
    }
    if let Some(&b) = betas.iter().find(|b| !(**b >= 1.0)) {
        return Err(QuadError::InvalidExponent(b));
    }
    let k = map.distortion_global(grid)?.value;
    let esssup = esssup_jacobian(map, grid)?;

    let mut levels: Vec<JacobianField> = vec![
        JacobianField::sample(map, grid)?,
        JacobianField::sample(map, &grid.refine())?,
    ];
    let mut deepest = grid.refine();

    let mut probe = |beta: f64| -> Result<BetaProbe, QuadError> {
        if beta.is_infinite() {
            return Ok(BetaProbe {
                beta,
                norm: esssup.value,
                status: if esssup.bounded {
                    ProbeStatus::Converged
                } else {
                    ProbeStatus::Diverged
                },
            });
        }
        let mut prev = levels[0].lbeta(beta);
        for depth in 1..=DIVERGENCE_REFINEMENTS as usize {
            if levels.len() <= depth {
                deepest = deepest.refine();
                levels.push(JacobianField::sample(map, &deepest)?);
            }
            let next = levels[depth].lbeta(beta);
            let gap = relative_gap(prev, next);
            if next.is_finite() && gap <= CONVERGENCE_TOLERANCE {
                return Ok(BetaProbe {
                    beta,
                    norm: next,
                    status: ProbeStatus::Converged,
                });
            }
            if depth == DIVERGENCE_REFINEMENTS as usize {
                let status = if !next.is_finite() || gap > DIVERGENCE_TOLERANCE {
                    ProbeStatus::Diverged
                } else {
                    ProbeStatus::Unresolved
                };
                return Ok(BetaProbe {
                    beta,
                    norm: next,
                    status,
                });
            }
            prev = next;
        }
        unreachable!()
    };

    let mut beta_probes = Vec::with_capacity(betas.len());
    for &b in betas {
        beta_probes.push(probe(b)?);
    }
    let image_area = match beta_probes.iter().find(|p| p.beta == 1.0) {
        Some(p) => p.norm,
        None => probe(1.0)?.norm,
    };
    let astala_limit = if k > 1.0 {
        k / (k - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(RegularityReport {
        k,
        beta_probes,
        esssup,
        image_area,
        astala_limit,
    })
}

/// A function on the target domain with its gradient.
pub trait TestFunction: Sync {
    fn value(&self, w: Complex64) -> f64;

    /// Gradient `(df/du, df/dv)`; central differences with step `1e-6` by
    /// default.
    fn gradient(&self, w: Complex64) -> [f64; 2] {
        let h = 1e-6;
        let dx = Complex64::new(h, 0.0);
        let dy = Complex64::new(0.0, h);
        [
            (self.value(w + dx) - self.value(w - dx)) / (2.0 * h),
            (self.value(w + dy) - self.value(w - dy)) / (2.0 * h),
        ]
    }
}

impl<F: Fn(Complex64) -> f64 + Sync> TestFunction for F {
    fn value(&self, w: Complex64) -> f64 {
        self(w)
    }
}

/// `u^px v^py` on the target plane `w = u + iv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monomial {
    pub px: u32,
    pub py: u32,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.px + self.py
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |name: &str, p: u32| match p {
            0 => String::new(),
            1 => name.to_string(),
            _ => format!("{name}^{p}"),
        };
        let (u, v) = (part("u", self.px), part("v", self.py));
        match (u.is_empty(), v.is_empty()) {
            (true, true) => f.write_str("1"),
            (false, true) => f.write_str(&u),
            (true, false) => f.write_str(&v),
            (false, false) => write!(f, "{u}*{v}"),
        }
    }
}

/// All monomials of total degree at most `max_degree`.
pub fn monomials_up_to(max_degree: u32) -> Vec<Monomial> {
    (0..=max_degree)
        .flat_map(|d| (0..=d).map(move |px| Monomial { px, py: d - px }))
        .collect()
}

impl TestFunction for Monomial {
    fn value(&self, w: Complex64) -> f64 {
        w.re.powi(self.px as i32) * w.im.powi(self.py as i32)
    }

    fn gradient(&self, w: Complex64) -> [f64; 2] {
        let d = |p: u32, x: f64| {
            if p == 0 {
                0.0
            } else {
                p as f64 * x.powi(p as i32 - 1)
            }
        };
        [
            d(self.px, w.re) * w.im.powi(self.py as i32),
            w.re.powi(self.px as i32) * d(self.py, w.im),
        ]
    }
}

/// Outcome of one numerical Poincaré check: `lhs <= rhs` is the inequality,
/// `ratio = lhs / rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Constant multiplying the Dirichlet norm on the right-hand side.
    pub constant: f64,
    /// Optimal shift `c`.
    pub shift: f64,
    /// Exponent `beta` used for the constant (unweighted check only).
    pub beta: Option<f64>,
}

/// `|x|^s` with fast paths for small integer exponents.
fn abs_pow(x: f64, s: f64) -> f64 {
    let a = x.abs();
    if s == 1.0 {
        a
    } else if s == 2.0 {
        a * a
    } else if s == 4.0 {
        let a2 = a * a;
        a2 * a2
    } else {
        a.powf(s)
    }
}

fn deviation_integral(values: &[f64], weights: &[f64], s: f64, c: f64) -> f64 {
    let terms: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(g, w)| w * abs_pow(g - c, s))
        .collect();
    pairwise_sum(&terms)
}

/// Minimizer of `c -> sum w |g - c|^s` by ternary search on `[min g, max g]`.
pub fn ternary_shift(values: &[f64], weights: &[f64], s: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return lo;
    }
    let tol = 1e-10 * lo.abs().max(hi.abs()).max(1.0);
    ternary_search(|c| deviation_integral(values, weights, s, c), lo, hi, tol)
}

/// Weighted mean, the exact minimizer for `s = 2`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let num: Vec<f64> = values.iter().zip(weights).map(|(g, w)| g * w).collect();
    pairwise_sum(&num) / pairwise_sum(weights)
}

/// `(min_c sum w |g - c|^s)^(1/s)` and the minimizing `c`.
pub fn best_deviation(values: &[f64], weights: &[f64], s: f64) -> (f64, f64) {
    let c = if s == 2.0 {
        weighted_mean(values, weights)
    } else {
        ternary_shift(values, weights, s)
    };
    (deviation_integral(values, weights, s, c).powf(1.0 / s), c)
}

/// Per-node data of a map on one grid, shared by the Poincaré checks.
#[derive(Debug, Clone)]
pub struct PoincareContext<'a> {
    map: &'a PlanarMap,
    grid: &'a QuadratureGrid,
    k: f64,
    points: Vec<Complex64>,
    weights: Vec<f64>,
    jacobians: Vec<f64>,
    field: JacobianField,
    esssup: Esssup,
}

impl<'a> PoincareContext<'a> {
    pub fn new(map: &'a PlanarMap, grid: &'a QuadratureGrid) -> Result<Self, QuadError> {
        let k = map.distortion_global(grid)?.value;
        let data = grid.map_nodes(|n| -> Result<_, QuadError> {
            let jet = map.jet(n.z)?;
            Ok((jet.w, n.weight, jet.jacobian().max(0.0)))
        })?;
        let mut points = Vec::with_capacity(data.len());
        let mut weights = Vec::with_capacity(data.len());
        let mut jacobians = Vec::with_capacity(data.len());
        for (w, wt, j) in data {
            points.push(w);
            weights.push(wt);
            jacobians.push(j);
        }
        let field = JacobianField::sample(map, grid)?;
        let esssup = esssup_jacobian(map, grid)?;
        Ok(PoincareContext {
            map,
            grid,
            k,
            points,
            weights,
            jacobians,
            field,
            esssup,
        })
    }

    pub fn distortion(&self) -> f64 {
        self.k
    }

    fn values(&self, f: &dyn TestFunction) -> Result<Vec<f64>, QuadError> {
        self.points
            .iter()
            .map(|&w| {
                let v = f.value(w);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(QuadError::NonFiniteIntegrand { z: w })
                }
            })
            .collect()
    }

    /// `∫_source |∇f(φ(x))|^2 J(x) dx`, the Dirichlet energy of `f` on the
    /// image domain.
    fn dirichlet(&self, f: &dyn TestFunction) -> Result<f64, QuadError> {
        let mut terms = Vec::with_capacity(self.points.len());
        for ((&w, &wt), &j) in self.points.iter().zip(&self.weights).zip(&self.jacobians) {
            let [gx, gy] = f.gradient(w);
            let t = wt * (gx * gx + gy * gy) * j;
            if !t.is_finite() {
                return Err(QuadError::NonFiniteIntegrand { z: w });
            }
            terms.push(t);
        }
        Ok(pairwise_sum(&terms))
    }

    fn finish(
        lhs: f64,
        constant: f64,
        dirichlet: f64,
        values: &[f64],
        shift: f64,
        beta: Option<f64>,
    ) -> PoincareCheck {
        let rhs = constant * dirichlet.sqrt();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= 1e-12 * scale {
            0.0
        } else {
            f64::INFINITY
        };
        PoincareCheck {
            lhs,
            rhs,
            ratio,
            constant,
            shift,
            beta,
        }
    }

    /// Weighted inequality on the image domain: the weighted `L_r` deviation
    /// equals the plain source integral of `|f∘φ - c|^r`, and the constant is
    /// `K^(1/2) B_{r,2}` of the source.
    pub fn weighted(&self, f: &dyn TestFunction, r: f64) -> Result<PoincareCheck, QuadError> {
        if !(r >= 1.0) || r.is_infinite() {
            return Err(QuadError::InvalidExponent(r));
        }
        let source_constant = source_poincare_constant(self.grid.source(), r)?;
        let values = self.values(f)?;
        let (lhs, shift) = best_deviation(&values, &self.weights, r);
        let constant = self.k.sqrt() * source_constant.value;
        let dirichlet = self.dirichlet(f)?;
        Ok(Self::finish(lhs, constant, dirichlet, &values, shift, None))
    }

    /// Unweighted inequality on the image domain with the constant
    /// `K^(1/2) B_{beta s/(beta-1),2} ||J||_beta^(1/s)`, minimized over
    /// `beta` in `[1.001, 64]` and `beta = ∞`.
    pub fn unweighted(&self, f: &dyn TestFunction, s: f64) -> Result<PoincareCheck, QuadError> {
        if !(s >= 1.0) || s.is_infinite() {
            return Err(QuadError::InvalidExponent(s));
        }
        let constant = self.unweighted_constant(s)?;
        self.unweighted_with(f, s, constant)
    }

    /// Unweighted check with a `(constant, beta)` pair from
    /// [`PoincareContext::unweighted_constant`], for reuse across functions.
    pub fn unweighted_with(
        &self,
        f: &dyn TestFunction,
        s: f64,
        (constant, beta): (f64, f64),
    ) -> Result<PoincareCheck, QuadError> {
        let values = self.values(f)?;
        let weights: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.jacobians)
            .map(|(w, j)| w * j)
            .collect();
        let (lhs, shift) = best_deviation(&values, &weights, s);
        let dirichlet = self.dirichlet(f)?;
        Ok(Self::finish(
            lhs,
            constant,
            dirichlet,
            &values,
            shift,
            Some(beta),
        ))
    }

    /// Smallest available constant for the unweighted inequality and the
    /// exponent `beta` it was obtained at.
    pub fn unweighted_constant(&self, s: f64) -> Result<(f64, f64), QuadError> {
        let sqrt_k = self.k.sqrt();
        let infinite = if self.esssup.bounded {
            source_poincare_constant(self.grid.source(), s)
                .ok()
                .map(|b| sqrt_k * b.value * self.esssup.value.powf(1.0 / s))
        } else {
            None
        };
        if self.grid.source() == Source::CenteredSquare {
            return infinite
                .map(|c| (c, f64::INFINITY))
                .ok_or(QuadError::UnsupportedSource(s));
        }
        let constant_at = |beta: f64| {
            let r = beta * s / (beta - 1.0);
            let b = bounds::poincare_disc_upper(r)
                .map(|c| c.value)
                .unwrap_or(f64::INFINITY);
            sqrt_k * b * self.field.lbeta(beta).powf(1.0 / s)
        };
        let (beta, value) = scan_then_golden(
            |b| constant_at(b).ln(),
            BETA_MIN,
            BETA_MAX_DEFAULT,
            48,
            1e-6,
        );
        let finite = if value.is_finite() && lbeta_jacobian_norm(self.map, beta, self.grid).is_ok()
        {
            Some((value.exp(), beta))
        } else {
            None
        };
        match (finite, infinite) {
            (Some(f), Some(i)) => Ok(if i <= f.0 { (i, f64::INFINITY) } else { f }),
            (Some(f), None) => Ok(f),
            (None, Some(i)) => Ok((i, f64::INFINITY)),
            (None, None) => Err(QuadError::NoAdmissibleBeta),
        }
    }
}

/// Poincaré constant available for a source domain at exponent `r`: the
/// upper formula on the disc, the exact value `sqrt(2)/pi` on the square
/// for `r = 2`.
fn source_poincare_constant(source: Source, r: f64) -> Result<PoincareConstant, QuadError> {
    match source {
        Source::UnitDisc => {
            bounds::poincare_disc_upper(r).map_err(|_| QuadError::InvalidExponent(r))
        }
        Source::CenteredSquare if r == 2.0 => Ok(bounds::exact_square_constant()),
        Source::CenteredSquare => Err(QuadError::UnsupportedSource(r)),
    }
}

/// Weighted Poincaré check for a single function; see
/// [`PoincareContext::weighted`].
pub fn check_poincare_weighted(
    map: &PlanarMap,
    f: &dyn TestFunction,
    r: f64,
    grid: &QuadratureGrid,
) -> Result<PoincareCheck, QuadError> {
    PoincareContext::new(map, grid)?.weighted(f, r)
}

/// Unweighted Poincaré check for a single function; see
/// [`PoincareContext::unweighted`].
pub fn check_poincare_unweighted(
    map: &PlanarMap,
    f: &dyn TestFunction,
    s: f64,
    grid: &QuadratureGrid,
) -> Result<PoincareCheck, QuadError> {
    PoincareContext::new(map, grid)?.unweighted(f, s)
}
