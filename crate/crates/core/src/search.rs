//! One-dimensional minimization helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[a, b]`, stopping once the
/// bracket is narrower than `tol`. Returns `(x_min, f_min)`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    [(a, fa), (c, fc), (d, fd), (b, fb)]
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |best, p| {
            if p.1 < best.1 {
                p
            } else {
                best
            }
        })
}

/// Scans `samples` log-spaced points of `[a, b]`, then polishes the best one
/// by golden-section search inside its neighbouring bracket. Guards against
/// functions that are only piecewise unimodal.
pub fn scan_then_golden(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    samples: usize,
    tol: f64,
) -> (f64, f64) {
    assert!(a > 0.0 && b > a && samples >= 3);
    let ratio = (b / a).ln() / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples)
        .map(|i| {
            if i + 1 == samples {
                b
            } else {
                a * (ratio * i as f64).exp()
            }
        })
        .collect();
    let (best, fbest) =
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (i, f(x)))
            .fold(
                (0, f64::INFINITY),
                |acc, p| if p.1 < acc.1 { p } else { acc },
            );
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(samples - 1)];
    let (x, fx) = golden_section(&f, lo, hi, tol);
    if fx <= fbest {
        (x, fx)
    } else {
        (xs[best], fbest)
    }
}

/// Ternary search for the minimizer of a convex function on `[a, b]`.
pub fn ternary_search(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    0.5 * (a + b)
}
