//! Constants and lower bounds for the first non-trivial Neumann eigenvalue.
//!
//! For a domain `Ω = φ(D)` with `φ` K-quasiconformal, the reciprocal `1/μ₁`
//! is bounded above in two ways:
//!
//! * finite `β`: `1/μ₁ ≤ K · B² · ‖J_φ‖_β`, where `B` is the upper estimate
//!   of the Poincaré–Sobolev constant of the disc at exponent `2β/(β-1)`;
//! * `β = ∞`: `1/μ₁ ≤ K · B₂₂² · ess sup |J_φ|`, with the exact constant
//!   `B₂₂ = 1/j'₁₁` on the disc or `√2/π` on the centered square.
//!
//! The module also evaluates the comparison estimates (Pólya,
//! Payne–Weinberger, the competing star-domain constant) and the norms of
//! the composition operators behind the bounds.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::maps::{MapError, PlanarMap, Source};
use crate::quadrature::{
    esssup_jacobian, infimum_jacobian, integrate, JacobianField, QuadError, QuadratureGrid,
    BETA_MIN, CONVERGENCE_TOLERANCE, DIVERGENCE_TOLERANCE,
};
use crate::search::scan_then_golden;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("beta = {0} is outside (1, ∞]")]
    BetaOutOfRange(f64),
    #[error("exponent {0} is outside the admissible range")]
    InvalidExponent(f64),
    #[error("jacobian norm {0} is not finite")]
    NonFiniteNorm(f64),
    #[error("essential supremum of the jacobian is infinite")]
    InfiniteEsssup,
    #[error("constant of kind {0:?} cannot be used for the β = ∞ bound")]
    UnsupportedConstant(ConstantKind),
    #[error("no admissible exponent beta")]
    NoAdmissibleBeta,
    #[error("integrand is not integrable")]
    NonFiniteIntegrand,
    #[error("internal mismatch between equivalent bound formulas: {0} vs {1}")]
    FormulaMismatch(f64, f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Map(#[from] MapError),
}

// ---------------------------------------------------------------------------
// Bessel function J1 and the first zero of its derivative
// ---------------------------------------------------------------------------

/// Ascending series of `J₁`, `J₁'` and `J₁''` at `x`, truncated once terms
/// drop below `1e-20`.
pub fn bessel_j1_series(x: f64) -> (f64, f64, f64) {
    // J1(x) = sum_m (-1)^m (x/2)^(2m+1) / (m! (m+1)!)
    let h = 0.5 * x;
    let mut coeff = 1.0; // (-1)^m / (m! (m+1)!)
    let mut even = 1.0; // h^(2m)
    let (mut j, mut dj, mut ddj) = (0.0, 0.0, 0.0);
    for m in 0..200 {
        let n = (2 * m + 1) as f64;
        let term = coeff * even * h;
        j += term;
        // d/dx h^n = n h^(n-1) / 2
        dj += coeff * n * even * 0.5;
        if m > 0 {
            ddj += coeff * n * (n - 1.0) * even / h * 0.25;
        }
        if term.abs() < 1e-20 && m > 2 {
            break;
        }
        coeff /= -((m + 1) as f64 * (m + 2) as f64);
        even *= h * h;
    }
    (j, dj, ddj)
}

/// First positive zero `j'₁₁ ≈ 1.8411837813` of `J₁'`, by bisection on
/// `[1.5, 2.2]` followed by Newton polishing.
pub fn bessel_j1prime_first_zero() -> f64 {
    static ZERO: OnceLock<f64> = OnceLock::new();
    *ZERO.get_or_init(|| {
        let d = |x: f64| bessel_j1_series(x).1;
        let (mut a, mut b) = (1.5, 2.2);
        debug_assert!(d(a) > 0.0 && d(b) < 0.0);
        for _ in 0..30 {
            let m = 0.5 * (a + b);
            if d(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let mut x = 0.5 * (a + b);
        for _ in 0..20 {
            let (_, dj, ddj) = bessel_j1_series(x);
            let step = dj / ddj;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x
    })
}

// ---------------------------------------------------------------------------
// Poincaré–Sobolev constants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantKind {
    /// Upper estimate from a closed-form formula.
    UpperFormula,
    /// Exact `B₂₂` of the unit disc, `1/j'₁₁`.
    ExactDisc,
    /// Exact `B₂₂` of the centered square of side `√2`, `√2/π`.
    ExactSquare,
}

/// Poincaré–Sobolev constant `B_{r,2}` of a source domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareConstant {
    pub r: f64,
    pub value: f64,
    pub kind: ConstantKind,
}

/// Upper estimate `B_{r,2}(D) ≤ (π/2)^((2-r)/(2r)) (r+2)^((r+2)/(2r))`.
pub fn poincare_disc_upper(r: f64) -> Result<PoincareConstant, BoundError> {
    if !(r >= 1.0) || r.is_infinite() {
        return Err(BoundError::InvalidExponent(r));
    }
    let value = (0.5 * PI).powf((2.0 - r) / (2.0 * r)) * (r + 2.0).powf((r + 2.0) / (2.0 * r));
    Ok(PoincareConstant {
        r,
        value,
        kind: ConstantKind::UpperFormula,
    })
}

/// The same estimate at `r = 2β/(β-1)`, written in `β`:
/// `2 π^(-1/(2β)) ((2β-1)/(β-1))^((2β-1)/(2β))`. At `β = ∞` this is the
/// limiting value 4.
pub fn poincare_beta_form(beta: f64) -> Result<PoincareConstant, BoundError> {
    if !(beta > 1.0) {
        return Err(BoundError::BetaOutOfRange(beta));
    }
    if beta.is_infinite() {
        return Ok(PoincareConstant {
            r: 2.0,
            value: 4.0,
            kind: ConstantKind::UpperFormula,
        });
    }
    let e = (2.0 * beta - 1.0) / (2.0 * beta);
    let value = 2.0 * PI.powf(-1.0 / (2.0 * beta)) * ((2.0 * beta - 1.0) / (beta - 1.0)).powf(e);
    Ok(PoincareConstant {
        r: 2.0 * beta / (beta - 1.0),
        value,
        kind: ConstantKind::UpperFormula,
    })
}

pub fn exact_disc_constant() -> PoincareConstant {
    PoincareConstant {
        r: 2.0,
        value: 1.0 / bessel_j1prime_first_zero(),
        kind: ConstantKind::ExactDisc,
    }
}

pub fn exact_square_constant() -> PoincareConstant {
    PoincareConstant {
        r: 2.0,
        value: 2f64.sqrt() / PI,
        kind: ConstantKind::ExactSquare,
    }
}

/// Exact `B₂₂` of a source domain.
pub fn exact_source_constant(source: Source) -> PoincareConstant {
    match source {
        Source::UnitDisc => exact_disc_constant(),
        Source::CenteredSquare => exact_square_constant(),
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Theorem {
    /// Finite `β` bound through the `L_β` norm of the jacobian.
    #[serde(rename = "A_finite_beta")]
    FiniteBeta,
    /// `β = ∞` bound on the disc, through the essential supremum.
    #[serde(rename = "Infty_beta")]
    InfiniteBeta,
    /// `β = ∞` bound with the exact constant of the square source.
    #[serde(rename = "Square_source")]
    SquareSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Baselines {
    pub polya_upper: Option<f64>,
    pub payne_weinberger_lower: Option<f64>,
    pub vv_constant: Option<f64>,
}

/// One lower bound for `μ₁` with the factors that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenBoundReport {
    pub theorem: Theorem,
    pub k: f64,
    /// `f64::INFINITY` for the essential-supremum bounds.
    pub beta: f64,
    pub jacobian_norm: f64,
    pub poincare_constant: PoincareConstant,
    pub inv_mu1_upper: f64,
    pub mu1_lower: f64,
    pub baselines: Baselines,
    pub diagnostics: Vec<String>,
    /// Whether the two algebraic routes to a finite-β bound agreed.
    pub checksum_ok: bool,
}

impl EigenBoundReport {
    fn new(
        theorem: Theorem,
        k: f64,
        beta: f64,
        jacobian_norm: f64,
        poincare_constant: PoincareConstant,
        inv_mu1_upper: f64,
    ) -> Self {
        EigenBoundReport {
            theorem,
            k,
            beta,
            jacobian_norm,
            poincare_constant,
            inv_mu1_upper,
            mu1_lower: 1.0 / inv_mu1_upper,
            baselines: Baselines::default(),
            diagnostics: Vec::new(),
            checksum_ok: true,
        }
    }

    /// `√(1/μ₁ upper)`, the implied bound on the Poincaré constant `B₂₂(Ω)`.
    pub fn poincare_bound(&self) -> f64 {
        self.inv_mu1_upper.sqrt()
    }

    /// False when the lower bound exceeds the Pólya ceiling.
    pub fn is_consistent(&self) -> bool {
        match self.baselines.polya_upper {
            Some(p) => self.mu1_lower <= p,
            None => true,
        }
    }

    /// Attaches the comparison estimates. `area` is the image area; the
    /// Payne–Weinberger bound is only attached when the caller vouches for
    /// convexity by passing a diameter.
    pub fn with_baselines(
        mut self,
        area: f64,
        diameter: Option<f64>,
        competing_p: Option<f64>,
    ) -> Self {
        self.baselines = Baselines {
            polya_upper: Some(polya_upper(area)),
            payne_weinberger_lower: diameter.map(payne_weinberger_lower),
            vv_constant: competing_p.map(vv_competing_bound),
        };
        self.diagnostics.push(format!(
            "polya_upper = 4π/|Ω| with |Ω| = {area:.12}; advisory, plane-covering is not verified"
        ));
        if !self.is_consistent() {
            self.diagnostics
                .push("inconsistent: lower bound exceeds the Pólya ceiling".into());
        }
        self
    }
}

/// Finite-β bound `1/μ₁ ≤ K B² ‖J‖_β` with `B = poincare_beta_form(β)`,
/// cross-checked against the expanded form
/// `4K π^(-1/β) ((2β-1)/(β-1))^((2β-1)/β) ‖J‖_β`.
pub fn theorem_a_bound(
    k: f64,
    beta: f64,
    jacobian_norm: f64,
) -> Result<EigenBoundReport, BoundError> {
    if !(beta > 1.0) || beta.is_infinite() {
        return Err(BoundError::BetaOutOfRange(beta));
    }
    if !(jacobian_norm.is_finite() && jacobian_norm >= 0.0) {
        return Err(BoundError::NonFiniteNorm(jacobian_norm));
    }
    let b = poincare_beta_form(beta)?;
    let intermediate = k * b.value * b.value * jacobian_norm;
    let expanded = 4.0 * k / PI.powf(1.0 / beta)
        * ((2.0 * beta - 1.0) / (beta - 1.0)).powf((2.0 * beta - 1.0) / beta)
        * jacobian_norm;
    if (intermediate - expanded).abs() > 1e-12 * intermediate.abs().max(expanded.abs()) {
        return Err(BoundError::FormulaMismatch(intermediate, expanded));
    }
    let mut report =
        EigenBoundReport::new(Theorem::FiniteBeta, k, beta, jacobian_norm, b, intermediate);
    report.diagnostics.push(format!(
        "finite beta: K = {k}, B_(2β/(β-1),2) upper = {:.12}, ||J||_β = {jacobian_norm:.12}",
        b.value
    ));
    Ok(report)
}

/// `β = ∞` bound `1/μ₁ ≤ K B₂₂² ess sup |J|` with an exact source constant.
pub fn theorem_infty_bound(
    k: f64,
    esssup: f64,
    source_constant: &PoincareConstant,
) -> Result<EigenBoundReport, BoundError> {
    let theorem = match source_constant.kind {
        ConstantKind::ExactDisc => Theorem::InfiniteBeta,
        ConstantKind::ExactSquare => Theorem::SquareSource,
        kind => return Err(BoundError::UnsupportedConstant(kind)),
    };
    if !esssup.is_finite() {
        return Err(BoundError::InfiniteEsssup);
    }
    let b = source_constant.value;
    let mut report = EigenBoundReport::new(
        theorem,
        k,
        f64::INFINITY,
        esssup,
        *source_constant,
        k * b * b * esssup,
    );
    report.diagnostics.push(format!(
        "beta = ∞: K = {k}, exact B_(2,2) = {b:.12} ({:?}), ess sup |J| = {esssup:.12}",
        source_constant.kind
    ));
    if theorem == Theorem::SquareSource {
        report.diagnostics.push(
            "square source: the printed estimate is stated for the second eigenvalue; \
             treated here as the first non-trivial one"
                .into(),
        );
    }
    Ok(report)
}

/// Best available bound for `map`: minimizes the finite-β bound over
/// `β ∈ [1.001, beta_max]` (disc sources only) and compares it with the
/// `β = ∞` bound when the jacobian is bounded. Both candidates are recorded
/// in the diagnostics.
pub fn optimize_beta(
    map: &PlanarMap,
    grid: &QuadratureGrid,
    beta_max: f64,
) -> Result<EigenBoundReport, BoundError> {
    if !(beta_max > BETA_MIN) {
        return Err(BoundError::BetaOutOfRange(beta_max));
    }
    let distortion = map.distortion_global(grid)?;
    let k = distortion.value;
    let esssup = esssup_jacobian(map, grid)?;

    let infinite = if esssup.bounded {
        Some(theorem_infty_bound(
            k,
            esssup.value,
            &exact_source_constant(map.source()),
        )?)
    } else {
        None
    };

    let finite = match map.source() {
        Source::UnitDisc => best_finite_beta(map, grid, k, beta_max)?,
        Source::CenteredSquare => None,
    };

    let mut diagnostics = vec![format!("K = {k} ({:?})", distortion.kind)];
    if let Some(r) = &finite {
        diagnostics.push(format!(
            "finite-beta candidate: beta* = {:.9}, 1/mu1 <= {:.12}",
            r.beta, r.inv_mu1_upper
        ));
    } else if map.source() == Source::CenteredSquare {
        diagnostics.push("finite-beta bound needs a disc source; skipped".into());
    } else {
        diagnostics.push("finite-beta candidate: no converged exponent".into());
    }
    if let Some(r) = &infinite {
        diagnostics.push(format!(
            "beta = ∞ candidate: 1/mu1 <= {:.12}",
            r.inv_mu1_upper
        ));
    } else {
        diagnostics.push("beta = ∞ candidate: jacobian unbounded".into());
    }

    let mut best = match (finite, infinite) {
        (Some(f), Some(i)) => {
            if i.inv_mu1_upper <= f.inv_mu1_upper {
                i
            } else {
                f
            }
        }
        (Some(f), None) => f,
        (None, Some(i)) => i,
        (None, None) => return Err(BoundError::NoAdmissibleBeta),
    };
    diagnostics.append(&mut best.diagnostics);
    best.diagnostics = diagnostics;
    Ok(best)
}

fn best_finite_beta(
    map: &PlanarMap,
    grid: &QuadratureGrid,
    k: f64,
    beta_max: f64,
) -> Result<Option<EigenBoundReport>, BoundError> {
    let coarse = JacobianField::sample(map, grid)?;
    let fine = JacobianField::sample(map, &grid.refine())?;
    let log_bound = |beta: f64| -> f64 {
        let b = match poincare_beta_form(beta) {
            Ok(b) => b.value,
            Err(_) => return f64::INFINITY,
        };
        (k * b * b * fine.lbeta(beta)).ln()
    };
    let (beta, value) = scan_then_golden(log_bound, BETA_MIN, beta_max, 64, 1e-6);
    if !value.is_finite() {
        return Ok(None);
    }
    let (n0, n1) = (coarse.lbeta(beta), fine.lbeta(beta));
    let gap = (n0 - n1).abs() / n0.abs().max(n1.abs());
    if !(gap <= CONVERGENCE_TOLERANCE) {
        return Ok(None);
    }
    let mut report = theorem_a_bound(k, beta, n1)?;
    report
        .diagnostics
        .push(format!("norm level gap {gap:.3e} at beta*"));
    Ok(Some(report))
}

// ---------------------------------------------------------------------------
// Comparison estimates
// ---------------------------------------------------------------------------

/// Pólya ceiling `μ₁ ≤ 4π/|Ω|` for plane-covering domains. Advisory.
pub fn polya_upper(area: f64) -> f64 {
    4.0 * PI / area
}

/// Payne–Weinberger bound `μ₁ ≥ π²/d²` for convex domains of diameter `d`.
pub fn payne_weinberger_lower(diameter: f64) -> f64 {
    PI * PI / (diameter * diameter)
}

/// Competing constant for weighted Poincaré inequalities in star domains,
/// `14 C̄_p [8/7 (1/2 + p/(2 C̄_p))]^(1/p)` with `C̄₁ = 1/2`, `C̄₂ = 1/π` and
/// `C̄_p = 2 (p/2)^(1/p)` otherwise.
pub fn vv_competing_bound(p: f64) -> f64 {
    let c = if p == 1.0 {
        0.5
    } else if p == 2.0 {
        1.0 / PI
    } else {
        2.0 * (0.5 * p).powf(1.0 / p)
    };
    14.0 * c * (8.0 / 7.0 * (0.5 + p / (2.0 * c))).powf(1.0 / p)
}

// ---------------------------------------------------------------------------
// Composition operators
// ---------------------------------------------------------------------------

/// Norm of `f ↦ f∘φ` between first-order Sobolev seminorms, `L¹_p → L¹_q`:
/// `(∫ (|Dφ|^p / J)^(q/(p-q)))^((p-q)/(pq))` for `q < p`, and `K^(1/2)`
/// for `p = q = 2`.
pub fn composition_operator_norm(
    map: &PlanarMap,
    p: f64,
    q: f64,
    grid: &QuadratureGrid,
) -> Result<f64, BoundError> {
    if p == 2.0 && q == 2.0 {
        return Ok(map.distortion_global(grid)?.value.sqrt());
    }
    if !(q >= 1.0 && q < p) || p.is_infinite() {
        return Err(BoundError::InvalidExponent(p));
    }
    let e = q / (p - q);
    let integrand = |z| -> f64 {
        match map.jet(z) {
            Ok(jet) => {
                let j = jet.jacobian();
                (jet.opnorm().powf(p) / j).powf(e)
            }
            Err(_) => f64::NAN,
        }
    };
    let integral = refined_integral(grid, integrand)?;
    Ok(integral.powf((p - q) / (p * q)))
}

/// Norm of `g ↦ g∘φ` from `L_r(Ω)` to `L_s(D)`, written on the source by a
/// change of variables: `(∫_D J^(-s/(r-s)))^((r-s)/(rs))` for `s < r` and
/// `(inf J)^(-1/s)` for `s = r`. Returns `f64::INFINITY` when the jacobian
/// vanishes in the `s = r` case.
pub fn lebesgue_composition_norm(
    map: &PlanarMap,
    r: f64,
    s: f64,
    grid: &QuadratureGrid,
) -> Result<f64, BoundError> {
    if !(s >= 1.0 && s <= r) || r.is_infinite() {
        return Err(BoundError::InvalidExponent(s));
    }
    if s == r {
        let inf = infimum_jacobian(map, grid)?;
        return Ok(if inf > 0.0 {
            inf.powf(-1.0 / s)
        } else {
            f64::INFINITY
        });
    }
    let e = -s / (r - s);
    if let crate::maps::Family::RadialPower { k } = map.family() {
        // J = (k+1)|z|^(2k): |z|^(2k e) is integrable in the plane iff 2k|e| < 2.
        if *k > 0.0 && k * e.abs() >= 1.0 {
            return Err(BoundError::NonFiniteIntegrand);
        }
    }
    let integrand = |z| map.jacobian(z).map(|j| j.powf(e)).unwrap_or(f64::NAN);
    let integral = refined_integral(grid, integrand)?;
    Ok(integral.powf((r - s) / (r * s)))
}

/// Integral on `grid` refined until two levels agree to the convergence
/// tolerance; a gap above the divergence threshold after three refinements
/// is reported as a non-integrable integrand.
fn refined_integral(
    grid: &QuadratureGrid,
    f: impl Fn(num_complex::Complex64) -> f64 + Sync,
) -> Result<f64, BoundError> {
    let eval = |g: &QuadratureGrid| match integrate(g, &f) {
        Ok(v) => Ok(v),
        Err(QuadError::NonFiniteIntegrand { .. }) => Err(BoundError::NonFiniteIntegrand),
        Err(e) => Err(e.into()),
    };
    let mut g = grid.clone();
    let mut prev = eval(&g)?;
    for _ in 0..3 {
        g = g.refine();
        let next = eval(&g)?;
        let gap = (next - prev).abs() / next.abs().max(prev.abs()).max(f64::MIN_POSITIVE);
        if gap <= CONVERGENCE_TOLERANCE {
            return Ok(next);
        }
        if gap > DIVERGENCE_TOLERANCE && g.level() >= grid.level() + 3 {
            return Err(BoundError::NonFiniteIntegrand);
        }
        prev = next;
    }
    Ok(prev)
}
