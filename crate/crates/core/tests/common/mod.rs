//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here reuses the closed forms under test: flows are checked against
//! Runge-Kutta integration of the raw ODEs, transition matrices against a
//! series matrix exponential with scaling and squaring, and convolution
//! integrals against trapezoidal quadrature.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Classic fixed-step RK4 for `x' = f(x)`.
pub fn rk4<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    mut x: [f64; N],
    t: f64,
    steps: usize,
) -> [f64; N] {
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&add(&x, &scale(&k1, h / 2.0)));
        let k3 = f(&add(&x, &scale(&k2, h / 2.0)));
        let k4 = f(&add(&x, &scale(&k3, h)));
        for i in 0..N {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn add<const N: usize>(a: &[f64; N], b: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| a[i] + b[i])
}

fn scale<const N: usize>(a: &[f64; N], s: f64) -> [f64; N] {
    std::array::from_fn(|i| a[i] * s)
}

/// Matrix exponential by scaling-and-squaring with a Taylor series on the
/// scaled matrix, truncated when terms fall below 1e-20 relative.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm = a.amax();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..200 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() < 1e-20 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Trapezoidal quadrature of a vector-valued integrand on `[0, t]`.
pub fn trapezoid<const N: usize>(
    f: impl Fn(f64) -> [f64; N],
    t: f64,
    points: usize,
) -> [f64; N] {
    let h = t / (points - 1) as f64;
    let mut acc = [0.0; N];
    for k in 0..points {
        let w = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let v = f(k as f64 * h);
        for i in 0..N {
            acc[i] += w * v[i] * h;
        }
    }
    acc
}

/// Central finite difference of a scalar-to-vector map.
pub fn central_diff<const N: usize>(f: impl Fn(f64) -> [f64; N], x: f64, eps: f64) -> [f64; N] {
    let plus = f(x + eps);
    let minus = f(x - eps);
    std::array::from_fn(|i| (plus[i] - minus[i]) / (2.0 * eps))
}
