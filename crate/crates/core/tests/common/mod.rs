//! Reference values computed without the library.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `J₁'(x) = (1/π) ∫₀^π sin(τ − x sin τ) sin τ dτ`. The integrand extends to
/// an even periodic function, so the trapezoid rule converges geometrically.
pub fn bessel_j1_prime(x: f64) -> f64 {
    let n = 400;
    let h = PI / n as f64;
    let f = |t: f64| (t - x * t.sin()).sin() * t.sin();
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    (inner + 0.5 * (f(0.0) + f(PI))) * h / PI
}

/// First positive zero of `J₁'` by bisection on `[1.5, 2.2]`.
pub fn j11_prime() -> f64 {
    let (mut a, mut b) = (1.5, 2.2);
    assert!(bessel_j1_prime(a) > 0.0 && bessel_j1_prime(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if bessel_j1_prime(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// `(k+1)(π/(kβ+1))^(1/β)`: `L_β` norm of the jacobian of `|z|^k z` on the
/// unit disc, from `∫ r^(2kβ+1) dr = 1/(2kβ+2)`.
pub fn radial_lbeta(k: f64, beta: f64) -> f64 {
    (k + 1.0) * (PI / (k * beta + 1.0)).powf(1.0 / beta)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
