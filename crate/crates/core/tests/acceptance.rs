//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the lines always reach the test log.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qcbound::bounds::{
    bessel_j1prime_first_zero, exact_disc_constant, exact_square_constant, theorem_a_bound,
    theorem_infty_bound, vv_competing_bound,
};
use qcbound::fem::{assemble, build_source_mesh, converged_mu1, element_matrices, mesh_for, LevelSummary};
use qcbound::maps::{PlanarMap, Source};
use qcbound::quadrature::{esssup_jacobian, lbeta_jacobian_norm, QuadratureGrid};
use qcbound::report::{cmd_compare, cmd_verify_poincare, DomainSpec, MapSpec, RunConfig};

use common::{j11_prime, radial_lbeta, rel};

type Outcome = Result<String, String>;

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Solved meshes collected along the way for the final spectrum check.
#[derive(Default)]
struct Solved(Vec<(String, LevelSummary)>);

impl Solved {
    fn add(&mut self, name: &str, levels: &[LevelSummary]) {
        self.0.extend(levels.iter().map(|l| (name.to_string(), l.clone())));
    }
}

fn infinite_bound(map: &PlanarMap, constant: &qcbound::bounds::PoincareConstant) -> Result<f64, String> {
    let grid = QuadratureGrid::for_map(map, 1);
    let k = map.distortion_global(&grid).map_err(err)?.value;
    let sup = esssup_jacobian(map, &grid).map_err(err)?;
    ensure(sup.bounded, || "unbounded jacobian".into())?;
    Ok(theorem_infty_bound(k, sup.value, constant).map_err(err)?.inv_mu1_upper)
}

fn cardioid_closed_form() -> Outcome {
    let j = j11_prime();
    let mut slowest = Duration::ZERO;
    for k in 1..=8 {
        let start = Instant::now();
        let map = PlanarMap::cardioid(k as f64).map_err(err)?;
        let got = infinite_bound(&map, &exact_disc_constant())?;
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        let expected = 16.0 * (k * k) as f64 / (j * j);
        ensure(rel(got, expected) < 1e-8, || format!("k={k}: {got} vs {expected}"))?;
        ensure(elapsed < Duration::from_secs(1), || format!("k={k} took {elapsed:?}"))?;
    }
    Ok(format!("k=1..8 match 16k²/j'² to 1e-8, slowest {slowest:.2?}"))
}

fn square_closed_form() -> Outcome {
    for k in 0..=8 {
        let map = PlanarMap::radial_power(k as f64, Source::CenteredSquare).map_err(err)?;
        let got = infinite_bound(&map, &exact_square_constant())?;
        let expected = 2.0 * ((k + 1) * (k + 1)) as f64 / (PI * PI);
        ensure(rel(got, expected) < 1e-8, || format!("k={k}: {got} vs {expected}"))?;
    }
    Ok("k=0..8 match 2(k+1)²/π² to 1e-8".into())
}

fn competing_constant() -> Outcome {
    let v = vv_competing_bound(2.0);
    ensure((v - 9.09117).abs() < 1e-4, || format!("{v}"))?;
    Ok(format!("p=2 gives {v:.6}"))
}

fn constant_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for beta in [1.1, 1.5, 2.0, 3.0, 10.0, 50.0] {
        let report = theorem_a_bound(1.0, beta, 1.0).map_err(err)?;
        let expanded = 4.0 * PI.powf(-1.0 / beta)
            * ((2.0 * beta - 1.0) / (beta - 1.0)).powf((2.0 * beta - 1.0) / beta);
        let b = report.poincare_constant.value;
        worst = worst.max(rel(b * b, expanded)).max(rel(report.inv_mu1_upper, expanded));
    }
    ensure(worst < 1e-12, || format!("worst relative gap {worst:e}"))?;
    Ok(format!("worst relative gap {worst:.1e}"))
}

fn disc_eigenvalue(solved: &mut Solved) -> Outcome {
    let j = bessel_j1prime_first_zero();
    ensure((j - 1.8411837813).abs() < 1e-9, || format!("j' = {j}"))?;
    ensure((j - j11_prime()).abs() < 1e-12, || format!("j' = {j} vs {}", j11_prime()))?;
    let start = Instant::now();
    let est = converged_mu1(&PlanarMap::identity(Source::UnitDisc), 2..=4).map_err(err)?;
    let elapsed = start.elapsed();
    solved.add("disc", &est.levels);
    let exact = j * j;
    let gap = rel(est.best_mu1(), exact);
    ensure(gap < 5e-3, || format!("fem {} vs {exact}", est.best_mu1()))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("j' = {j:.10}, fem {:.6} vs {exact:.6} ({gap:.1e}) in {elapsed:.2?}", est.best_mu1()))
}

fn square_eigenvalue(solved: &mut Solved) -> Outcome {
    let est = converged_mu1(&PlanarMap::identity(Source::CenteredSquare), 2..=4).map_err(err)?;
    solved.add("square", &est.levels);
    let exact = 0.5 * PI * PI;
    let gap = rel(est.best_mu1(), exact);
    ensure(gap < 5e-3, || format!("fem {} vs {exact}", est.best_mu1()))?;
    Ok(format!("fem {:.8} vs {exact:.8} ({gap:.1e})", est.best_mu1()))
}

fn sandwiches(solved: &mut Solved) -> Outcome {
    let start = Instant::now();
    let config = RunConfig::default();
    let mut cases = Vec::new();
    for k in 1..=3 {
        cases.push(DomainSpec::new(MapSpec::Cardioid { k: k as f64 }, Source::UnitDisc).map_err(err)?);
    }
    for k in 0..=3 {
        cases.push(
            DomainSpec::new(MapSpec::RadialPower { k: k as f64 }, Source::CenteredSquare).map_err(err)?,
        );
    }
    let mut advisory = 0;
    for spec in &cases {
        let run = cmd_compare(spec, &config).map_err(err)?;
        solved.add(&spec.name, &run.oracle.levels);
        let s = run.sandwich;
        ensure(s.hard_pass, || {
            format!("{}: lower {} > fem {} + {}", spec.name, s.mu1_lower, s.mu1_fem, s.fem_error)
        })?;
        if !s.polya_pass {
            advisory += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} domains, bound ≤ fem, {advisory} Pólya advisories, {elapsed:.2?}",
        cases.len()
    ))
}

fn identity_ratio(solved: &mut Solved) -> Outcome {
    let spec = DomainSpec::new(MapSpec::Identity, Source::UnitDisc).map_err(err)?;
    let run = cmd_compare(&spec, &RunConfig::default()).map_err(err)?;
    solved.add("identity", &run.oracle.levels);
    let ratio = run.sandwich.ratio;
    ensure((0.99..=1.01).contains(&ratio), || format!("ratio {ratio}"))?;
    Ok(format!("ratio {ratio:.6}"))
}

fn norms_and_area() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let map = PlanarMap::radial_power(k, Source::UnitDisc).map_err(err)?;
        let grid = QuadratureGrid::for_map(&map, 1);
        for beta in [1.0, 1.5, 2.0, 4.0, 8.0] {
            let got = lbeta_jacobian_norm(&map, beta, &grid).map_err(err)?.value;
            let gap = rel(got, radial_lbeta(k, beta));
            ensure(gap < 1e-8, || format!("k={k} beta={beta}: {got}"))?;
            worst = worst.max(gap);
        }
    }
    for k in 1..=4 {
        let map = PlanarMap::cardioid(k as f64).map_err(err)?;
        let grid = QuadratureGrid::for_map(&map, 1);
        let area = lbeta_jacobian_norm(&map, 1.0, &grid).map_err(err)?.value;
        ensure(rel(area, 6.0 * PI) < 1e-6, || format!("cardioid k={k} area {area}"))?;
    }
    Ok(format!("25 norms within {worst:.1e}, cardioid area 6π for k=1..4"))
}

fn poincare_suite() -> Outcome {
    let mut specs = Vec::new();
    for source in [Source::UnitDisc, Source::CenteredSquare] {
        specs.push(DomainSpec::new(MapSpec::Identity, source).map_err(err)?);
        for k in 1..=3 {
            specs.push(DomainSpec::new(MapSpec::RadialPower { k: k as f64 }, source).map_err(err)?);
        }
    }
    for k in 1..=3 {
        specs.push(DomainSpec::new(MapSpec::Cardioid { k: k as f64 }, Source::UnitDisc).map_err(err)?);
    }
    let a = Complex64::new(0.5, 0.2);
    specs.push(
        DomainSpec::new(MapSpec::Moebius { a_re: a.re, a_im: a.im, theta: 0.7 }, Source::UnitDisc)
            .map_err(err)?,
    );
    let config = RunConfig::default();
    let (mut count, mut worst) = (0, 0.0f64);
    for spec in &specs {
        let rows = cmd_verify_poincare(spec, &config).map_err(err)?;
        ensure(!rows.is_empty(), || format!("{}: no checks", spec.name))?;
        for row in &rows {
            ensure(row.ratio <= 1.0 + 1e-6, || {
                format!("{} {} {} {}: ratio {}", spec.name, row.kind, row.exponent, row.function, row.ratio)
            })?;
            worst = worst.max(row.ratio);
        }
        count += rows.len();
    }
    Ok(format!("{count} checks on {} domains, worst ratio {worst:.4}", specs.len()))
}

fn element_and_spectrum(solved: &Solved) -> Outcome {
    let (k, m) = element_matrices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).map_err(|a| format!("area {a}"))?;
    let k_ref = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            ensure(k[i][j] == k_ref[i][j], || format!("stiffness[{i}][{j}] = {}", k[i][j]))?;
            let m_ref = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
            ensure((m[i][j] - m_ref).abs() < 1e-15, || format!("mass[{i}][{j}] = {}", m[i][j]))?;
        }
    }
    let mut meshes = vec![
        build_source_mesh(Source::UnitDisc, 3),
        build_source_mesh(Source::CenteredSquare, 3),
    ];
    meshes.push(mesh_for(&PlanarMap::cardioid(2.0).map_err(err)?, 3).map_err(err)?);
    for mesh in &meshes {
        let (_, mass) = assemble(mesh).map_err(err)?;
        let ones = vec![1.0; mass.dim()];
        let total = mass.bilinear(&ones, &ones);
        ensure(rel(total, mesh.area()) < 1e-12, || format!("mass {total} vs area {}", mesh.area()))?;
    }
    ensure(!solved.0.is_empty(), || "no solved meshes".into())?;
    for (name, level) in &solved.0 {
        ensure(level.mu0.abs() < 1e-8 * level.mu1, || {
            format!("{name} level {}: mu0 {} mu1 {}", level.level, level.mu0, level.mu1)
        })?;
    }
    Ok(format!(
        "reference element exact, mass = area on {} meshes, mu0 < 1e-8 mu1 on {} solved meshes",
        meshes.len(),
        solved.0.len()
    ))
}

fn main() -> ExitCode {
    let mut solved = Solved::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "cardioid ∞-bound", cardioid_closed_form()));
    results.push((2, "square-source bound", square_closed_form()));
    results.push((3, "competing constant", competing_constant()));
    results.push((4, "constant identity", constant_identity()));
    results.push((5, "disc eigenvalue", disc_eigenvalue(&mut solved)));
    results.push((6, "square eigenvalue", square_eigenvalue(&mut solved)));
    results.push((7, "sandwich", sandwiches(&mut solved)));
    results.push((8, "identity ratio", identity_ratio(&mut solved)));
    results.push((9, "jacobian norms", norms_and_area()));
    results.push((10, "Poincaré suite", poincare_suite()));
    results.push((11, "element and spectrum", element_and_spectrum(&solved)));

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}): {detail}");
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
