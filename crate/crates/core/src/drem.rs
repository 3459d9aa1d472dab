//! Kreisselmeier regressor extension and mixing.
//!
//! An `n x q` regression `Y = Omega theta` is extended with
//!
//! ```text
//! Zdot   = -lambda Z   + Omega' Y
//! Psidot = -lambda Psi + Omega' Omega
//! ```
//!
//! and mixed through the adjugate of the filtered gram matrix into `q`
//! decoupled scalar regressions `Ymix_i = Delta theta_i`, `Delta = det Psi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest gram dimension the memoized cofactor expansion accepts.
pub const MAX_MIX_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DremState {
    pub lambda: f64,
    pub z: DVector<f64>,
    pub psi: DMatrix<f64>,
}

/// Decoupled scalar regressions sharing one regressor `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedLre {
    pub mixed: DVector<f64>,
    pub delta: f64,
}

impl DremState {
    pub fn new(lambda: f64, params: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda_e", format!("extension pole must be positive, got {lambda}")));
        }
        if params == 0 || params > MAX_MIX_DIM {
            return Err(Error::config("params", format!("mixing dimension must be in 1..={MAX_MIX_DIM}")));
        }
        Ok(Self { lambda, z: DVector::zeros(params), psi: DMatrix::zeros(params, params) })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn derivative(&self, y: &DVector<f64>, omega: &DMatrix<f64>) -> Self {
        let ot = omega.transpose();
        Self {
            lambda: self.lambda,
            z: &ot * y - &self.z * self.lambda,
            psi: &ot * omega - &self.psi * self.lambda,
        }
    }

    pub fn mix(&self) -> MixedLre {
        let (adj, delta) = adjugate_and_det(&self.psi);
        MixedLre { mixed: adj * &self.z, delta }
    }

    /// One step with `(y, omega)` held, then mixing.
    pub fn step(&mut self, y: &DVector<f64>, omega: &DMatrix<f64>, dt: f64) -> MixedLre {
        let mut x = self.pack();
        crate::lre::rk4_hold(&mut x, dt, |x| self.with_state(x).derivative(y, omega).pack());
        *self = self.with_state(&x);
        self.mix()
    }

    pub(crate) fn packed_len(params: usize) -> usize {
        params + params * params
    }

    pub(crate) fn pack(&self) -> Vec<f64> {
        let mut v = self.z.as_slice().to_vec();
        v.extend_from_slice(self.psi.as_slice());
        v
    }

    pub(crate) fn with_state(&self, x: &[f64]) -> Self {
        let q = self.dim();
        Self {
            lambda: self.lambda,
            z: DVector::from_column_slice(&x[..q]),
            psi: DMatrix::from_column_slice(q, q, &x[q..q + q * q]),
        }
    }
}

/// Determinant of `a` with one row and one column optionally removed, by
/// Laplace expansion with memoization over column subsets (`O(n 2^n)`, no
/// divisions).
fn minor_det(a: &DMatrix<f64>, skip_row: Option<usize>, skip_col: Option<usize>) -> f64 {
    let n = a.nrows();
    let rows: Vec<usize> = (0..n).filter(|&r| Some(r) != skip_row).collect();
    let cols: Vec<usize> = (0..n).filter(|&c| Some(c) != skip_col).collect();
    let m = rows.len();
    if m == 0 {
        return 1.0;
    }
    let mut dp = [0.0f64; 1 << MAX_MIX_DIM];
    dp[0] = 1.0;
    for mask in 1usize..(1 << m) {
        let row = rows[mask.count_ones() as usize - 1];
        let mut acc = 0.0;
        let mut greater = 0u32;
        for c in (0..m).rev() {
            if mask & (1 << c) != 0 {
                let term = a[(row, cols[c])] * dp[mask & !(1 << c)];
                if greater.is_multiple_of(2) {
                    acc += term;
                } else {
                    acc -= term;
                }
                greater += 1;
            }
        }
        dp[mask] = acc;
    }
    dp[(1 << m) - 1]
}

/// Determinant by cofactor expansion.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square() && a.nrows() <= MAX_MIX_DIM, "determinant supports square matrices up to {MAX_MIX_DIM}");
    minor_det(a, None, None)
}

/// Classical adjugate (transpose of the cofactor matrix), so that
/// `adj(A) A = A adj(A) = det(A) I` with no division by `det(A)`.
pub fn adjugate(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square() && a.nrows() <= MAX_MIX_DIM, "adjugate supports square matrices up to {MAX_MIX_DIM}");
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor_det(a, Some(j), Some(i))
    })
}

pub fn adjugate_and_det(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    (adjugate(a), determinant(a))
}

/// Trapezoidal `int_0^t_c Delta^2`, the interval-excitation level of a
/// recorded `Delta`. Samples after `t_c` are ignored.
pub fn excitation_integral(times: &[f64], delta: &[f64], t_c: f64) -> f64 {
    assert_eq!(times.len(), delta.len());
    times
        .windows(2)
        .zip(delta.windows(2))
        .take_while(|(t, _)| t[1] <= t_c)
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] * d[0] + d[1] * d[1]))
        .sum()
}
