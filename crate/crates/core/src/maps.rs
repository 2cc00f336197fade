//! Planar maps from a source domain (unit disc or centered square) onto
//! target domains.
//!
//! Every map is described by a [`Family`] plus the [`Source`] it is defined
//! on. Builtin families carry closed-form Wirtinger derivatives
//!
//! ```text
//! w_z    = (w_x - i w_y) / 2
//! w_zbar = (w_x + i w_y) / 2
//! J      = |w_z|^2 - |w_zbar|^2
//! ```
//!
//! while user-supplied maps fall back to central finite differences.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::QuadratureGrid;

/// Slack used when deciding whether a point lies in the closed source domain.
const SOURCE_TOLERANCE: f64 = 1e-12;

/// Relative tolerance on `J` below which a point counts as degenerate.
const JACOBIAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point {z} lies outside the closed source domain")]
    PointOutsideSource { z: Complex64 },
    #[error("derivative is undefined at {z}")]
    DerivativeSingularity { z: Complex64 },
    #[error("degenerate or orientation-reversing jacobian {jacobian} at {z}")]
    DegenerateJacobian { z: Complex64, jacobian: f64 },
    #[error("invalid map parameter: {0}")]
    InvalidParameter(String),
}

/// Domain on which a map is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    /// The open unit disc `|z| < 1`.
    #[serde(rename = "disc")]
    UnitDisc,
    /// The square `(-sqrt(2)/2, sqrt(2)/2)^2`, inscribed in the unit circle.
    #[serde(rename = "square")]
    CenteredSquare,
}

impl Source {
    /// Half the side length of the centered square.
    pub const SQUARE_HALF_SIDE: f64 = FRAC_1_SQRT_2;

    pub fn area(self) -> f64 {
        match self {
            Source::UnitDisc => PI,
            Source::CenteredSquare => 2.0,
        }
    }

    /// Whether `z` lies in the closed domain, up to a small slack.
    pub fn contains(self, z: Complex64) -> bool {
        match self {
            Source::UnitDisc => z.norm() <= 1.0 + SOURCE_TOLERANCE,
            Source::CenteredSquare => {
                let h = Self::SQUARE_HALF_SIDE + SOURCE_TOLERANCE;
                z.re.abs() <= h && z.im.abs() <= h
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::UnitDisc => "disc",
            Source::CenteredSquare => "square",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A user-supplied value evaluator `z -> w(z)`.
#[derive(Clone)]
pub struct SampledFn(Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>);

impl SampledFn {
    pub fn new(f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        SampledFn(Arc::new(f))
    }

    fn call(&self, z: Complex64) -> Complex64 {
        (self.0)(z)
    }
}

impl fmt::Debug for SampledFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SampledFn(..)")
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Identity,
    /// `w = |z|^k z`, a `(k+1)`-quasiconformal radial stretch.
    RadialPower {
        k: f64,
    },
    /// `w = (|z|^(k-1) z + 1)^2`, a `k`-quasiconformal map of the disc onto
    /// the interior of the cardioid.
    CardioidPower {
        k: f64,
    },
    /// Disc automorphism `w = e^(i theta) (z - a) / (1 - conj(a) z)`.
    Moebius {
        a: Complex64,
        theta: f64,
    },
    /// Members applied right to left: `[f, g]` is `f ∘ g`.
    Composition(Vec<PlanarMap>),
    UserSampled(SampledFn),
}

/// How a [`Jet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Derivation {
    Analytic,
    FiniteDifference { step: f64 },
}

/// Value and Wirtinger derivatives of a map at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub w: Complex64,
    pub wz: Complex64,
    pub wzbar: Complex64,
    pub derivation: Derivation,
}

impl Jet {
    pub fn jacobian(&self) -> f64 {
        self.wz.norm_sqr() - self.wzbar.norm_sqr()
    }

    /// Operator norm of the differential, `|w_z| + |w_zbar|`.
    pub fn opnorm(&self) -> f64 {
        self.wz.norm() + self.wzbar.norm()
    }

    /// Smallest stretch of the differential, `|w_z| - |w_zbar|`.
    pub fn min_stretch(&self) -> f64 {
        self.wz.norm() - self.wzbar.norm()
    }
}

/// Pointwise distortion data. `k_point` is infinite where the differential
/// collapses a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSample {
    pub z: Complex64,
    pub k_point: f64,
    pub opnorm: f64,
    pub jacobian: f64,
}

impl DistortionSample {
    pub fn is_infinite(&self) -> bool {
        self.k_point.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DistortionKind {
    /// Known constant of a builtin family.
    Analytic,
    /// Product of member constants of a composition; an upper bound.
    ProductBound,
    /// Supremum over sampled points.
    Sampled,
}

/// Global distortion constant `K` of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distortion {
    pub value: f64,
    pub kind: DistortionKind,
}

#[derive(Debug, Clone)]
pub struct PlanarMap {
    family: Family,
    source: Source,
}

impl PlanarMap {
    pub fn identity(source: Source) -> Self {
        PlanarMap {
            family: Family::Identity,
            source,
        }
    }

    pub fn radial_power(k: f64, source: Source) -> Result<Self, MapError> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(MapError::InvalidParameter(format!(
                "radial power needs k >= 0, got {k}"
            )));
        }
        Ok(PlanarMap {
            family: Family::RadialPower { k },
            source,
        })
    }

    pub fn cardioid(k: f64) -> Result<Self, MapError> {
        if !(k.is_finite() && k >= 1.0) {
            return Err(MapError::InvalidParameter(format!(
                "cardioid power needs k >= 1, got {k}"
            )));
        }
        Ok(PlanarMap {
            family: Family::CardioidPower { k },
            source: Source::UnitDisc,
        })
    }

    pub fn moebius(a: Complex64, theta: f64) -> Result<Self, MapError> {
        if !(a.norm() < 1.0 && theta.is_finite()) {
            return Err(MapError::InvalidParameter(format!(
                "moebius needs |a| < 1 and finite theta, got a = {a}, theta = {theta}"
            )));
        }
        Ok(PlanarMap {
            family: Family::Moebius { a, theta },
            source: Source::UnitDisc,
        })
    }

    /// Composition of `members`, applied right to left. The source is the
    /// source of the last member.
    pub fn compose(members: Vec<PlanarMap>) -> Result<Self, MapError> {
        let source = match members.last() {
            Some(m) => m.source,
            None => {
                return Err(MapError::InvalidParameter(
                    "composition needs at least one member".into(),
                ))
            }
        };
        Ok(PlanarMap {
            family: Family::Composition(members),
            source,
        })
    }

    pub fn user_sampled(
        f: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        source: Source,
    ) -> Self {
        PlanarMap {
            family: Family::UserSampled(SampledFn::new(f)),
            source,
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn source(&self) -> Source {
        self.source
    }

    /// Short human-readable description, e.g. `cardioid(k=2)`.
    pub fn describe(&self) -> String {
        match &self.family {
            Family::Identity => "identity".into(),
            Family::RadialPower { k } => format!("radial-power(k={k})"),
            Family::CardioidPower { k } => format!("cardioid(k={k})"),
            Family::Moebius { a, theta } => {
                format!("moebius(a={}{:+}i, theta={theta})", a.re, a.im)
            }
            Family::Composition(ms) => {
                let parts: Vec<_> = ms.iter().map(|m| m.describe()).collect();
                parts.join(" ∘ ")
            }
            Family::UserSampled(_) => "user-sampled".into(),
        }
    }

    /// Preimage of a cusp of the image boundary, where the jacobian vanishes
    /// on the boundary and sampling should be denser.
    pub fn cusp_preimage(&self) -> Option<Complex64> {
        match self.family {
            Family::CardioidPower { .. } => Some(Complex64::new(-1.0, 0.0)),
            _ => None,
        }
    }

    fn check_source(&self, z: Complex64) -> Result<(), MapError> {
        if z.re.is_finite() && z.im.is_finite() && self.source.contains(z) {
            Ok(())
        } else {
            Err(MapError::PointOutsideSource { z })
        }
    }

    /// Map value `w(z)`.
    pub fn evaluate(&self, z: Complex64) -> Result<Complex64, MapError> {
        self.check_source(z)?;
        match &self.family {
            Family::Composition(members) => {
                let mut w = z;
                for m in members.iter().rev() {
                    w = m.evaluate(w)?;
                }
                Ok(w)
            }
            _ => Ok(self.evaluate_unchecked(z)),
        }
    }

    /// Evaluates the defining formula without checking the source domain.
    /// Used for finite-difference stencils that step just past the boundary.
    fn evaluate_unchecked(&self, z: Complex64) -> Complex64 {
        match &self.family {
            Family::Identity => z,
            Family::RadialPower { k } => z * abs_pow(z, *k),
            Family::CardioidPower { k } => {
                let g = z * abs_pow(z, k - 1.0) + 1.0;
                g * g
            }
            Family::Moebius { a, theta } => {
                Complex64::from_polar(1.0, *theta) * (z - a) / (1.0 - a.conj() * z)
            }
            Family::Composition(members) => {
                members.iter().rev().fold(z, |w, m| m.evaluate_unchecked(w))
            }
            Family::UserSampled(f) => f.call(z),
        }
    }

    /// Value and Wirtinger derivatives at `z`. Builtin families are analytic;
    /// user-sampled maps use central differences.
    pub fn jet(&self, z: Complex64) -> Result<Jet, MapError> {
        self.check_source(z)?;
        let jet = match &self.family {
            Family::Identity => Jet {
                w: z,
                wz: Complex64::new(1.0, 0.0),
                wzbar: Complex64::new(0.0, 0.0),
                derivation: Derivation::Analytic,
            },
            Family::RadialPower { k } => {
                let r_k = abs_pow(z, *k);
                let u = unit_phase(z);
                Jet {
                    w: z * r_k,
                    wz: Complex64::new((k / 2.0 + 1.0) * r_k, 0.0),
                    wzbar: (k / 2.0) * r_k * u * u,
                    derivation: Derivation::Analytic,
                }
            }
            Family::CardioidPower { k } => {
                let r_km1 = abs_pow(z, k - 1.0);
                let g = z * r_km1 + 1.0;
                let u = unit_phase(z);
                Jet {
                    w: g * g,
                    wz: (k + 1.0) * r_km1 * g,
                    wzbar: (k - 1.0) * r_km1 * u * u * g,
                    derivation: Derivation::Analytic,
                }
            }
            Family::Moebius { a, theta } => {
                let rot = Complex64::from_polar(1.0, *theta);
                let denom = 1.0 - a.conj() * z;
                Jet {
                    w: rot * (z - a) / denom,
                    wz: rot * (1.0 - a.norm_sqr()) / (denom * denom),
                    wzbar: Complex64::new(0.0, 0.0),
                    derivation: Derivation::Analytic,
                }
            }
            Family::Composition(members) => {
                let mut jet = Jet {
                    w: z,
                    wz: Complex64::new(1.0, 0.0),
                    wzbar: Complex64::new(0.0, 0.0),
                    derivation: Derivation::Analytic,
                };
                for m in members.iter().rev() {
                    let outer = m.jet(jet.w)?;
                    jet = chain(&outer, &jet);
                }
                jet
            }
            Family::UserSampled(_) => self.finite_difference_jet(z),
        };
        if [jet.w, jet.wz, jet.wzbar]
            .iter()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(MapError::DerivativeSingularity { z });
        }
        Ok(jet)
    }

    /// Jet from central differences with step `1e-6 * max(1, |z|)`,
    /// available for every family.
    pub fn finite_difference_jet(&self, z: Complex64) -> Jet {
        let h = 1e-6 * z.norm().max(1.0);
        let dx = Complex64::new(h, 0.0);
        let dy = Complex64::new(0.0, h);
        let w_x = (self.evaluate_unchecked(z + dx) - self.evaluate_unchecked(z - dx)) / (2.0 * h);
        let w_y = (self.evaluate_unchecked(z + dy) - self.evaluate_unchecked(z - dy)) / (2.0 * h);
        let i = Complex64::i();
        Jet {
            w: self.evaluate_unchecked(z),
            wz: 0.5 * (w_x - i * w_y),
            wzbar: 0.5 * (w_x + i * w_y),
            derivation: Derivation::FiniteDifference { step: h },
        }
    }

    pub fn jacobian(&self, z: Complex64) -> Result<f64, MapError> {
        Ok(self.jet(z)?.jacobian())
    }

    /// Pointwise distortion `(|w_z| + |w_zbar|) / (|w_z| - |w_zbar|)`.
    pub fn distortion_pointwise(&self, z: Complex64) -> Result<DistortionSample, MapError> {
        let jet = self.jet(z)?;
        let jacobian = jet.jacobian();
        let opnorm = jet.opnorm();
        if opnorm == 0.0 || jacobian < -JACOBIAN_TOLERANCE * opnorm * opnorm {
            return Err(MapError::DegenerateJacobian { z, jacobian });
        }
        let min_stretch = jet.min_stretch();
        let k_point = if min_stretch <= JACOBIAN_TOLERANCE * opnorm {
            f64::INFINITY
        } else {
            opnorm / min_stretch
        };
        Ok(DistortionSample {
            z,
            k_point,
            opnorm,
            jacobian,
        })
    }

    /// Distortion constant of a builtin family, if it is known in closed form.
    pub fn analytic_distortion(&self) -> Option<Distortion> {
        let analytic = |value| Distortion {
            value,
            kind: DistortionKind::Analytic,
        };
        match &self.family {
            Family::Identity | Family::Moebius { .. } => Some(analytic(1.0)),
            Family::RadialPower { k } => Some(analytic(k + 1.0)),
            Family::CardioidPower { k } => Some(analytic(*k)),
            Family::Composition(members) => {
                let mut product = 1.0;
                let mut exact = true;
                for m in members {
                    let d = m.analytic_distortion()?;
                    product *= d.value;
                    // Conformal members do not change the distortion.
                    if d.value != 1.0 {
                        exact &= members
                            .iter()
                            .filter(|o| {
                                o.analytic_distortion()
                                    .map(|x| x.value != 1.0)
                                    .unwrap_or(true)
                            })
                            .count()
                            <= 1;
                    }
                }
                Some(Distortion {
                    value: product,
                    kind: if exact {
                        DistortionKind::Analytic
                    } else {
                        DistortionKind::ProductBound
                    },
                })
            }
            Family::UserSampled(_) => None,
        }
    }

    /// Global distortion constant `K`. Builtin families and compositions of
    /// them return their closed-form value (a product bound for compositions);
    /// other maps take the supremum of the pointwise distortion over the grid
    /// nodes, the boundary sampled at four times the grid's density, and one
    /// dyadic refinement of the grid.
    pub fn distortion_global(&self, grid: &QuadratureGrid) -> Result<Distortion, MapError> {
        if let Some(d) = self.analytic_distortion() {
            return Ok(d);
        }
        let mut sup: f64 = 1.0;
        for g in [grid.clone(), grid.refine()] {
            let nodes = g.nodes();
            let points = nodes.iter().map(|n| n.z).chain(g.boundary_samples(4));
            for z in points {
                let sample = self.distortion_pointwise(z)?;
                sup = sup.max(sample.k_point);
            }
        }
        Ok(Distortion {
            value: sup,
            kind: DistortionKind::Sampled,
        })
    }
}

/// `|z|^p` with `0^0 = 1`.
fn abs_pow(z: Complex64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        z.norm().powf(p)
    }
}

/// `z / |z|`, taken as 1 at the origin.
fn unit_phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// Wirtinger chain rule for `outer ∘ inner`, where `outer` is evaluated at
/// `inner.w`.
fn chain(outer: &Jet, inner: &Jet) -> Jet {
    let derivation = match (outer.derivation, inner.derivation) {
        (Derivation::Analytic, Derivation::Analytic) => Derivation::Analytic,
        (Derivation::FiniteDifference { step }, _) | (_, Derivation::FiniteDifference { step }) => {
            Derivation::FiniteDifference { step }
        }
    };
    Jet {
        w: outer.w,
        wz: outer.wz * inner.wz + outer.wzbar * inner.wzbar.conj(),
        wzbar: outer.wz * inner.wzbar + outer.wzbar * inner.wz.conj(),
        derivation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn evaluate_examples() {
        let id = PlanarMap::identity(Source::UnitDisc);
        assert_eq!(id.evaluate(c(0.3, 0.4)).unwrap(), c(0.3, 0.4));
        let card = PlanarMap::cardioid(1.0).unwrap();
        assert_eq!(card.evaluate(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        let rad = PlanarMap::radial_power(1.0, Source::UnitDisc).unwrap();
        assert_relative_eq!(rad.evaluate(c(0.5, 0.0)).unwrap().re, 0.25);
    }

    #[test]
    fn outside_source_is_rejected() {
        let id = PlanarMap::identity(Source::UnitDisc);
        assert!(matches!(
            id.evaluate(c(0.9, 0.9)),
            Err(MapError::PointOutsideSource { .. })
        ));
        let sq = PlanarMap::identity(Source::CenteredSquare);
        assert!(sq.evaluate(c(0.7, 0.7)).is_ok());
        assert!(sq.jet(c(0.75, 0.0)).is_err());
    }

    #[test]
    fn parameters_are_validated() {
        assert!(PlanarMap::cardioid(0.5).is_err());
        assert!(PlanarMap::radial_power(-1.0, Source::UnitDisc).is_err());
        assert!(PlanarMap::moebius(c(1.0, 0.0), 0.0).is_err());
        assert!(PlanarMap::compose(vec![]).is_err());
    }

    #[test]
    fn jet_examples() {
        let rad = PlanarMap::radial_power(2.0, Source::UnitDisc).unwrap();
        let j = rad.jet(c(0.5, 0.0)).unwrap();
        assert_relative_eq!(j.wz.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(j.wzbar.re, 0.25, epsilon = 1e-15);
        assert_relative_eq!(j.jacobian(), 0.1875, epsilon = 1e-15);

        let card = PlanarMap::cardioid(1.0).unwrap();
        let j = card.jet(c(0.5, 0.0)).unwrap();
        assert_relative_eq!(j.wz.re, 3.0, epsilon = 1e-15);
        assert_eq!(j.wzbar, c(0.0, 0.0));
        assert_relative_eq!(card.jacobian(c(1.0, 0.0)).unwrap(), 16.0, epsilon = 1e-14);

        let id = PlanarMap::identity(Source::UnitDisc);
        let j = id.jet(c(-0.2, 0.1)).unwrap();
        assert_eq!((j.wz, j.wzbar), (c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!(id.jacobian(c(0.1, 0.1)).unwrap(), 1.0);
    }

    #[test]
    fn pointwise_distortion_of_families() {
        let z = c(0.3, -0.45);
        let id = PlanarMap::identity(Source::UnitDisc);
        assert_relative_eq!(id.distortion_pointwise(z).unwrap().k_point, 1.0);
        for k in [0.5, 1.0, 2.0, 3.0] {
            let rad = PlanarMap::radial_power(k, Source::UnitDisc).unwrap();
            assert_relative_eq!(
                rad.distortion_pointwise(z).unwrap().k_point,
                k + 1.0,
                max_relative = 1e-12
            );
        }
        for k in [1.0, 2.0, 5.0] {
            let card = PlanarMap::cardioid(k).unwrap();
            assert_relative_eq!(
                card.distortion_pointwise(z).unwrap().k_point,
                k,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn degenerate_points_are_errors() {
        let rad = PlanarMap::radial_power(2.0, Source::UnitDisc).unwrap();
        assert!(matches!(
            rad.distortion_pointwise(c(0.0, 0.0)),
            Err(MapError::DegenerateJacobian { .. })
        ));
        // Orientation-reversing maps are not accepted.
        let conj = PlanarMap::user_sampled(|z| z.conj(), Source::UnitDisc);
        assert!(matches!(
            conj.distortion_pointwise(c(0.1, 0.2)),
            Err(MapError::DegenerateJacobian { .. })
        ));
        // A fold along a line collapses one direction: infinite distortion.
        let squash = PlanarMap::user_sampled(|z| c(z.re, 0.0), Source::UnitDisc);
        assert!(squash
            .distortion_pointwise(c(0.1, 0.2))
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn radial_power_zero_is_identity() {
        let rad = PlanarMap::radial_power(0.0, Source::UnitDisc).unwrap();
        let z = c(0.0, 0.0);
        let j = rad.jet(z).unwrap();
        assert_eq!((j.w, j.wz, j.wzbar), (z, c(1.0, 0.0), c(0.0, 0.0)));
    }

    #[test]
    fn moebius_is_conformal() {
        let m = PlanarMap::moebius(c(0.3, -0.2), 0.7).unwrap();
        let s = m.distortion_pointwise(c(-0.4, 0.5)).unwrap();
        assert_relative_eq!(s.k_point, 1.0, max_relative = 1e-14);
        // Disc automorphism: boundary to boundary.
        let w = m.evaluate(Complex64::from_polar(1.0, 2.0)).unwrap();
        assert_relative_eq!(w.norm(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn composition_applies_right_to_left() {
        let rad = PlanarMap::radial_power(1.0, Source::UnitDisc).unwrap();
        let mob = PlanarMap::moebius(c(0.2, 0.1), 0.0).unwrap();
        let comp = PlanarMap::compose(vec![mob.clone(), rad.clone()]).unwrap();
        let z = c(0.3, 0.2);
        let expected = mob.evaluate(rad.evaluate(z).unwrap()).unwrap();
        assert_eq!(comp.evaluate(z).unwrap(), expected);
        let d = comp.analytic_distortion().unwrap();
        assert_eq!(d.value, 2.0);
        assert_eq!(d.kind, DistortionKind::Analytic);

        let two = PlanarMap::compose(vec![rad.clone(), rad]).unwrap();
        let d = two.analytic_distortion().unwrap();
        assert_eq!((d.value, d.kind), (4.0, DistortionKind::ProductBound));
    }
}
