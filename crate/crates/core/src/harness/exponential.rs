//! Exponential steps for the linear time-varying parts of the loop.
//!
//! Estimators and generators are linear in their own state with
//! coefficients that can be many orders of magnitude above `1 / dt`. Over a
//! step they are advanced through the exact flow of the Gauss-averaged
//! generator, which is unconditionally stable and keeps every fixed point
//! and every identity that holds for the continuous flow.

use nalgebra::{DMatrix, DVector, Matrix2};

/// Two-point Gauss nodes on `[0, 1]`.
pub const GAUSS_NODES: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Cubic Hermite interpolation of a step from `(x0, f0)` to `(x1, f1)` at
/// fraction `s` of the step length `h`.
pub fn hermite(x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], h: f64, s: f64, out: &mut [f64]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = (s3 - 2.0 * s2 + s) * h;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = (s3 - s2) * h;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h10 * f0[i] + h01 * x1[i] + h11 * f1[i];
    }
}

/// Closed-form `exp(m)` for a real `2 x 2` matrix.
pub fn expm2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let s = 0.5 * m.trace();
    let n = m - Matrix2::identity() * s;
    // n^2 = q I
    let q = n[(0, 0)] * n[(0, 0)] + n[(0, 1)] * n[(1, 0)];
    let r = q.abs().sqrt();
    let (c, sinc) = if r < 1e-6 {
        (1.0 + 0.5 * q, 1.0 + q / 6.0)
    } else if q > 0.0 {
        (r.cosh(), r.sinh() / r)
    } else {
        (r.cos(), r.sin() / r)
    };
    (Matrix2::identity() * c + n * sinc) * s.exp()
}

/// `(exp(m), phi1(m))` with `phi1(m) = sum m^k / (k + 1)!`.
pub fn exp_phi1(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, n)).fill_with_identity();
    let e = big.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, n)).into_owned())
}

/// Step of `x' = -a(t) x + b(t)` with `a >= 0` and `(a, b)` sampled at the
/// Gauss nodes. Any `x*` with `b = a x*` at both nodes is kept exactly.
pub fn relax_scalar(x: f64, a: [f64; 2], b: [f64; 2], h: f64) -> f64 {
    let sa = a[0] + a[1];
    let sb = b[0] + b[1];
    let decay = 0.5 * h * sa;
    if decay < 1e-12 {
        return x + 0.5 * h * sb;
    }
    let target = sb / sa;
    let e = (-decay).exp();
    target + (x - target) * e
}

/// Step of `x' = -A(t) x + b(t)` with `A` positive semidefinite, sampled at
/// the Gauss nodes.
pub fn relax_vector(x: &DVector<f64>, a: [&DMatrix<f64>; 2], b: [&DVector<f64>; 2], h: f64) -> DVector<f64> {
    let a_bar = (a[0] + a[1]) * (-0.5 * h);
    let b_bar = (b[0] + b[1]) * (0.5 * h);
    let (e, p) = exp_phi1(&a_bar);
    e * x + p * b_bar
}
