mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qcbound::bounds::{
    bessel_j1_series, bessel_j1prime_first_zero, composition_operator_norm,
    lebesgue_composition_norm, optimize_beta, poincare_beta_form, poincare_disc_upper,
    theorem_a_bound, theorem_infty_bound, exact_disc_constant,
};
use qcbound::fem::{assemble, mesh_for, richardson, LevelSummary, Provenance, SolverKind, TriMesh};
use qcbound::maps::{PlanarMap, Source};
use qcbound::quadrature::{esssup_jacobian, JacobianField, QuadratureGrid};
use qcbound::report::{DomainSpec, MapSpec};

use common::{bessel_j1_prime, rel};

fn disc_point() -> impl Strategy<Value = Complex64> {
    (0.0..0.97f64, 0.0..(2.0 * PI)).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

fn builtin_map() -> impl Strategy<Value = PlanarMap> {
    prop_oneof![
        (0.0..4.0f64).prop_map(|k| PlanarMap::radial_power(k, Source::UnitDisc).unwrap()),
        (1.0..5.0f64).prop_map(|k| PlanarMap::cardioid(k).unwrap()),
        (0.0..0.8f64, 0.0..(2.0 * PI), -3.0..3.0f64).prop_map(|(r, t, theta)| {
            PlanarMap::moebius(Complex64::from_polar(r, t), theta).unwrap()
        }),
    ]
}

fn leaf_spec() -> impl Strategy<Value = MapSpec> {
    prop_oneof![
        Just(MapSpec::Identity),
        (0.0..5.0f64).prop_map(|k| MapSpec::RadialPower { k }),
        (1.0..5.0f64).prop_map(|k| MapSpec::Cardioid { k }),
        (-0.6..0.6f64, -0.6..0.6f64, -3.0..3.0f64)
            .prop_map(|(a_re, a_im, theta)| MapSpec::Moebius { a_re, a_im, theta }),
    ]
}

fn map_spec() -> impl Strategy<Value = MapSpec> {
    prop_oneof![
        3 => leaf_spec(),
        1 => prop::collection::vec(leaf_spec(), 1..4)
            .prop_map(|composition| MapSpec::Composition { composition }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_form_matches_exponent_form(beta in 1.01..500.0f64) {
        let a = poincare_beta_form(beta).unwrap();
        let b = poincare_disc_upper(2.0 * beta / (beta - 1.0)).unwrap();
        prop_assert!(rel(a.value, b.value) < 1e-12);
    }

    #[test]
    fn finite_bound_is_linear_and_inverted(k in 1.0..20.0f64, beta in 1.01..100.0f64, norm in 0.01..100.0f64) {
        let r = theorem_a_bound(k, beta, norm).unwrap();
        prop_assert!((r.mu1_lower * r.inv_mu1_upper - 1.0).abs() < 1e-14);
        let doubled = theorem_a_bound(2.0 * k, beta, norm).unwrap();
        prop_assert!(rel(doubled.inv_mu1_upper, 2.0 * r.inv_mu1_upper) < 1e-14);
        prop_assert!(r.is_consistent());
    }

    #[test]
    fn infinite_bound_below_finite_limit(k in 1.0..10.0f64, sup in 0.1..50.0f64) {
        // 1/j'² < 16 = limit of the beta-form constant squared
        let r = theorem_infty_bound(k, sup, &exact_disc_constant()).unwrap();
        prop_assert!(r.inv_mu1_upper < 16.0 * k * sup);
    }

    #[test]
    fn pointwise_distortion_within_global(map in builtin_map(), z in disc_point()) {
        let global = map.analytic_distortion().unwrap().value;
        let d = map.distortion_pointwise(z).unwrap();
        prop_assert!(d.jacobian >= 0.0);
        if !d.is_infinite() {
            prop_assert!(d.k_point >= 1.0 - 1e-12);
            prop_assert!(d.k_point <= global * (1.0 + 1e-9), "{} > {}", d.k_point, global);
        }
    }

    #[test]
    fn analytic_jet_matches_finite_differences(map in builtin_map(), z in disc_point()) {
        prop_assume!((z + 1.0).norm() > 0.1 && z.norm() > 0.05);
        let a = map.jet(z).unwrap();
        let f = map.finite_difference_jet(z);
        let scale = a.opnorm().max(1.0);
        prop_assert!((a.w - f.w).norm() < 1e-12 * scale);
        prop_assert!((a.wz - f.wz).norm() < 1e-5 * scale);
        prop_assert!((a.wzbar - f.wzbar).norm() < 1e-5 * scale);
    }

    #[test]
    fn composition_jacobian_is_product(k in 0.0..3.0f64, r in 0.0..0.7f64, t in 0.0..6.0f64, z in disc_point()) {
        let inner = PlanarMap::moebius(Complex64::from_polar(r, t), 0.4).unwrap();
        let outer = PlanarMap::radial_power(k, Source::UnitDisc).unwrap();
        let both = PlanarMap::compose(vec![outer.clone(), inner.clone()]).unwrap();
        let mid = inner.evaluate(z).unwrap();
        prop_assert!((both.evaluate(z).unwrap() - outer.evaluate(mid).unwrap()).norm() < 1e-12);
        let expected = outer.jacobian(mid).unwrap() * inner.jacobian(z).unwrap();
        prop_assert!((both.jacobian(z).unwrap() - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn normalized_norm_grows_with_beta(map in builtin_map(), b1 in 1.0..8.0f64, step in 0.0..8.0f64) {
        let grid = QuadratureGrid::for_map(&map, 0);
        let field = JacobianField::sample(&map, &grid).unwrap();
        let area = grid.weight_sum();
        let b2 = b1 + step;
        let n1 = field.lbeta(b1) / area.powf(1.0 / b1);
        let n2 = field.lbeta(b2) / area.powf(1.0 / b2);
        prop_assert!(n1 <= n2 * (1.0 + 1e-12));
        prop_assert!(n2 <= field.max() * (1.0 + 1e-12));
    }

    #[test]
    fn bessel_series_matches_integral(x in 0.0..6.0f64) {
        let (_, d, _) = bessel_j1_series(x);
        prop_assert!((d - bessel_j1_prime(x)).abs() < 1e-12);
    }

    #[test]
    fn richardson_is_exact_for_second_order(mu in 0.1..100.0f64, c in -50.0..50.0f64, first in 0u32..4) {
        prop_assume!(c.abs() > 1e-3);
        let levels: Vec<LevelSummary> = (first..first + 3)
            .map(|l| LevelSummary {
                level: l,
                dof: 0,
                triangles: 0,
                area: 1.0,
                min_angle: 30.0,
                mu0: 0.0,
                mu1: mu + c * 4f64.powi(-(l as i32)),
                solver: SolverKind::Dense,
            })
            .collect();
        let (e, _) = richardson(&levels);
        prop_assert!((e.value - mu).abs() < 1e-9 * mu.max(c.abs()));
        prop_assert!((e.observed_order.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn domain_toml_round_trips(map in map_spec(), convex in any::<bool>(), name in "[a-z][a-z0-9_-]{0,12}") {
        let spec = DomainSpec {
            name,
            source: Source::UnitDisc,
            convex_hint: convex,
            diameter_hint: convex.then_some(2.0),
            map,
        };
        let back = DomainSpec::from_toml(&spec.to_toml()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimum_beats_beta_grid(k in 0.2..3.0f64) {
        let map = PlanarMap::radial_power(k, Source::UnitDisc).unwrap();
        let grid = QuadratureGrid::for_map(&map, 1);
        let best = optimize_beta(&map, &grid, 64.0).unwrap();
        let fine = JacobianField::sample(&map, &grid.refine()).unwrap();
        let sup = esssup_jacobian(&map, &grid).unwrap().value;
        let mut candidates = vec![theorem_infty_bound(k + 1.0, sup, &exact_disc_constant()).unwrap().inv_mu1_upper];
        for i in 0..100 {
            let beta = 1.001 * (64.0f64 / 1.001).powf(i as f64 / 99.0);
            candidates.push(theorem_a_bound(k + 1.0, beta, fine.lbeta(beta)).unwrap().inv_mu1_upper);
        }
        let grid_best = candidates.into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(best.inv_mu1_upper <= grid_best * (1.0 + 1e-9), "{} > {}", best.inv_mu1_upper, grid_best);
    }

    #[test]
    fn pushed_meshes_are_valid(map in builtin_map(), level in 0u32..3) {
        let mesh = mesh_for(&map, level).unwrap();
        mesh.validate().unwrap();
        for t in 0..mesh.triangle_count() {
            prop_assert!(mesh.signed_area(t) > 0.0);
        }
        let (s, m) = assemble(&mesh).unwrap();
        let ones = vec![1.0; s.dim()];
        prop_assert!(s.mul_vec(&ones).iter().all(|v| v.abs() < 1e-9));
        prop_assert!(rel(m.bilinear(&ones, &ones), mesh.area()) < 1e-12);
    }
}

#[test]
fn derivative_changes_sign_at_first_zero() {
    let j = bessel_j1prime_first_zero();
    assert!(bessel_j1_series(j).1.abs() < 1e-13);
    assert!(bessel_j1_prime(j - 1e-9) > 0.0);
    assert!(bessel_j1_prime(j + 1e-9) < 0.0);
    assert!((j - common::j11_prime()).abs() < 1e-12);
}

#[test]
fn lebesgue_norm_closed_forms() {
    let grid = QuadratureGrid::new(Source::UnitDisc, 1);
    // identity: |D|^((r-s)/(rs))
    for (r, s) in [(4.0, 2.0), (3.0, 1.0), (2.0, 1.5)] {
        let got = lebesgue_composition_norm(&PlanarMap::identity(Source::UnitDisc), r, s, &grid).unwrap();
        assert!(rel(got, PI.powf((r - s) / (r * s))) < 1e-10);
    }
    // |z|^k z: ∫ ((k+1) ρ^(2k))^e = (k+1)^e π/(ke+1), e = -s/(r-s)
    for (k, r, s) in [(0.5, 4.0, 2.0), (0.25, 3.0, 1.0), (1.0, 5.0, 1.0)] {
        let map = PlanarMap::radial_power(k, Source::UnitDisc).unwrap();
        let e = -s / (r - s);
        let exact = ((k + 1.0).powf(e) * PI / (k * e + 1.0)).powf((r - s) / (r * s));
        let grid = QuadratureGrid::for_map(&map, 1);
        let got = lebesgue_composition_norm(&map, r, s, &grid).unwrap();
        assert!(rel(got, exact) < 1e-6, "k={k}: {got} vs {exact}");
    }
    let map = PlanarMap::radial_power(2.0, Source::UnitDisc).unwrap();
    assert!(lebesgue_composition_norm(&map, 4.0, 2.0, &grid).is_err());
    assert_eq!(lebesgue_composition_norm(&map, 2.0, 2.0, &grid).unwrap(), f64::INFINITY);
}

#[test]
fn sobolev_composition_norm_of_conformal_maps() {
    let grid = QuadratureGrid::new(Source::UnitDisc, 1);
    let map = PlanarMap::moebius(Complex64::new(0.3, 0.1), 0.2).unwrap();
    assert!((composition_operator_norm(&map, 2.0, 2.0, &grid).unwrap() - 1.0).abs() < 1e-12);
    // conformal: |Dφ|^p / J = J^(p/2 - 1); identity gives |D|^((p-q)/(pq))
    let id = PlanarMap::identity(Source::UnitDisc);
    let got = composition_operator_norm(&id, 4.0, 2.0, &grid).unwrap();
    assert!(rel(got, PI.powf(0.25)) < 1e-10);
}

#[test]
fn mesh_text_survives_a_file() {
    let map = PlanarMap::cardioid(2.0).unwrap();
    let mesh = mesh_for(&map, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cardioid.mesh");
    mesh.write_text(std::fs::File::create(&path).unwrap()).unwrap();
    let reader = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
    let back = TriMesh::read_text(reader, mesh.provenance.clone()).unwrap();
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.boundary, mesh.boundary);
    for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
        assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
    }
    let bad = "VERTICES 3 / TRIANGLES 1\n0 0 1\n1 0 1\n0 1 1\n0 1 7\n";
    let provenance = Provenance { source: Source::UnitDisc, level: 0, map: None, graded: false };
    assert!(TriMesh::read_text(bad.as_bytes(), provenance).is_err());
}
