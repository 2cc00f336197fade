//! Library results against values computed independently.

mod common;

use std::f64::consts::PI;

use qcbound::bounds::{optimize_beta, polya_upper, Theorem};
use qcbound::fem::{converged_mu1, mesh_for, ConvergenceStatus};
use qcbound::maps::{PlanarMap, Source};
use qcbound::quadrature::{lbeta_jacobian_norm, QuadratureGrid};
use qcbound::report::{cmd_bound, DomainSpec, MapSpec, RunConfig};

use common::{j11_prime, rel};

fn builtin_maps() -> Vec<PlanarMap> {
    let mut maps = vec![PlanarMap::identity(Source::UnitDisc)];
    for k in 1..=4 {
        maps.push(PlanarMap::radial_power(k as f64, Source::UnitDisc).unwrap());
        maps.push(PlanarMap::radial_power(k as f64, Source::CenteredSquare).unwrap());
        maps.push(PlanarMap::cardioid(k as f64).unwrap());
    }
    maps.push(PlanarMap::moebius(num_complex::Complex64::new(0.4, -0.3), 1.0).unwrap());
    maps
}

#[test]
fn pushed_area_matches_jacobian_integral() {
    for map in builtin_maps() {
        let mesh = mesh_for(&map, 4).unwrap();
        let grid = QuadratureGrid::for_map(&map, 1);
        let integral = lbeta_jacobian_norm(&map, 1.0, &grid).unwrap().value;
        assert!(
            rel(mesh.area(), integral) < 5e-3,
            "{}: mesh {} vs {integral}",
            map.describe(),
            mesh.area()
        );
    }
}

#[test]
fn radial_power_image_of_square_has_area_of_jacobian() {
    // |z|^k z maps the square onto a star; ∫ (k+1)|z|^(2k) over the square
    // of half side a = 1/√2 equals 8(k+1) ∫₀^a ∫₀^x (x²+y²)^k dy dx.
    let k = 2.0;
    let a = std::f64::consts::FRAC_1_SQRT_2;
    // (x²+y²)² = x⁴ + 2x²y² + y⁴ on the triangle 0 ≤ y ≤ x ≤ a
    let inner = |x: f64| x.powi(5) + 2.0 * x.powi(5) / 3.0 + x.powi(5) / 5.0;
    let exact = 8.0 * (k + 1.0) * (a.powi(6) / 6.0) * (inner(1.0));
    let map = PlanarMap::radial_power(k, Source::CenteredSquare).unwrap();
    let grid = QuadratureGrid::for_map(&map, 1);
    let got = lbeta_jacobian_norm(&map, 1.0, &grid).unwrap().value;
    assert!(rel(got, exact) < 1e-10, "{got} vs {exact}");
}

#[test]
fn disc_oracle_converges_at_second_order() {
    let est = converged_mu1(&PlanarMap::identity(Source::UnitDisc), 1..=3).unwrap();
    assert_eq!(est.status, ConvergenceStatus::Converged);
    let order = est.extrapolated_mu1.unwrap().observed_order.unwrap();
    assert!((1.5..=2.5).contains(&order), "{order}");
    let j = j11_prime();
    // conforming elements on an inscribed polygon overestimate
    assert!(est.levels.iter().all(|l| l.mu1 > j * j));
    assert!(rel(est.best_mu1(), j * j) < 5e-3);
}

#[test]
fn identity_bound_is_the_exact_eigenvalue() {
    let map = PlanarMap::identity(Source::UnitDisc);
    let grid = QuadratureGrid::for_map(&map, 1);
    let r = optimize_beta(&map, &grid, 64.0).unwrap();
    assert_eq!(r.theorem, Theorem::InfiniteBeta);
    let j = j11_prime();
    assert!(rel(r.mu1_lower, j * j) < 1e-12);
}

#[test]
fn cardioid_polya_ceiling_is_constant() {
    for k in 1..=3 {
        let spec = DomainSpec::new(MapSpec::Cardioid { k: k as f64 }, Source::UnitDisc).unwrap();
        let run = cmd_bound(&spec, &RunConfig::default()).unwrap();
        let polya = run.report.baselines.polya_upper.unwrap();
        assert!(rel(polya, polya_upper(6.0 * PI)) < 1e-6);
        assert!(rel(polya, 2.0 / 3.0) < 1e-6);
    }
}
