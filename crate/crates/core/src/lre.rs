//! Filtered linear regression equations of an EL system.
//!
//! Every `p H(p)[x]` with `H(p) = 1/(p + lambda)` is realized in the proper
//! form `zdot = -lambda (z + x)`, output `z + x`, so no signal is ever
//! differentiated numerically and joint accelerations are never read.

use nalgebra::{DMatrix, DVector, SVector};

use crate::el_model::{ElState, EulerLagrange};
use crate::error::{Error, Result};

fn check_pole(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::config("lambda", format!("filter pole must be positive, got {lambda}")))
    }
}

/// Scalar regression `y = Omega' theta` obtained by filtering the power
/// balance `d/dt energy = qd' tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBalanceLre {
    pub lambda: f64,
    /// State of the `p H(p)` filter acting on the energy regressor.
    pub z: Vec<f64>,
    pub y: f64,
}

impl PowerBalanceLre {
    /// All filter states at zero.
    pub fn new(lambda: f64, params: usize) -> Result<Self> {
        check_pole(lambda)?;
        Ok(Self { lambda, z: vec![0.0; params], y: 0.0 })
    }

    /// Filter initialized with `z(0) = -omega(0)`, so `Omega(0) = 0 = y(0)`
    /// and the regression holds from `t = 0` whatever the initial energy.
    pub fn matched(lambda: f64, omega0: &[f64]) -> Result<Self> {
        check_pole(lambda)?;
        Ok(Self { lambda, z: omega0.iter().map(|v| -v).collect(), y: 0.0 })
    }

    /// `Omega = z + omega`.
    pub fn regressor(&self, omega: &[f64]) -> Vec<f64> {
        self.z.iter().zip(omega).map(|(z, w)| z + w).collect()
    }

    /// Time derivative given the current energy regressor and supplied
    /// power `qd' tau`.
    pub fn derivative(&self, omega: &[f64], power: f64) -> Self {
        Self {
            lambda: self.lambda,
            z: self.z.iter().zip(omega).map(|(z, w)| -self.lambda * (z + w)).collect(),
            y: -self.lambda * self.y + power,
        }
    }

    /// Advances both filters by `dt` holding the plant signals at `state`
    /// and returns `(y, Omega)` at the end of the step.
    pub fn step<S, const N: usize>(
        &mut self,
        sys: &S,
        state: &ElState<N>,
        tau: &SVector<f64, N>,
        dt: f64,
    ) -> (f64, Vec<f64>)
    where
        S: EulerLagrange<N> + ?Sized,
    {
        let omega = sys.energy_regressor(state);
        let power = state.qd.dot(tau);
        let mut x = self.pack();
        rk4_hold(&mut x, dt, |x| self.with_state(x).derivative(&omega, power).pack());
        *self = self.with_state(&x);
        (self.y, self.regressor(&omega))
    }

    pub(crate) fn packed_len(params: usize) -> usize {
        params + 1
    }

    pub(crate) fn pack(&self) -> Vec<f64> {
        let mut v = self.z.clone();
        v.push(self.y);
        v
    }

    pub(crate) fn with_state(&self, x: &[f64]) -> Self {
        let w = self.z.len();
        Self { lambda: self.lambda, z: x[..w].to_vec(), y: x[w] }
    }
}

/// Vector regression `y = Psi theta` obtained by filtering the equations of
/// motion (`n_q` rows, one column per parameter).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalLre<const N: usize> {
    pub lambda: f64,
    /// One filter state per regressor column.
    pub columns: Vec<SVector<f64, N>>,
    pub y: SVector<f64, N>,
}

impl<const N: usize> ClassicalLre<N> {
    pub fn new(lambda: f64, params: usize) -> Result<Self> {
        check_pole(lambda)?;
        Ok(Self { lambda, columns: vec![SVector::zeros(); params], y: SVector::zeros() })
    }

    /// Regressor `Psi` (`N x w`). Inertia columns output `s + m_i(q) qd`,
    /// gravity columns output `s`.
    pub fn regressor<S>(&self, sys: &S, state: &ElState<N>) -> DMatrix<f64>
    where
        S: EulerLagrange<N> + ?Sized,
    {
        let l = sys.inertia_params();
        let mut psi = DMatrix::zeros(N, self.columns.len());
        for (c, s) in self.columns.iter().enumerate() {
            let col = if c < l { s + sys.basis_momentum(c, state) } else { *s };
            psi.column_mut(c).copy_from(&col);
        }
        psi
    }

    pub fn derivative<S>(&self, sys: &S, state: &ElState<N>, tau: &SVector<f64, N>) -> Self
    where
        S: EulerLagrange<N> + ?Sized,
    {
        let l = sys.inertia_params();
        let lambda = self.lambda;
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < l {
                    // H(p)[p x - v] with x = m_i qd, v = 1/2 grad(qd' m_i qd)
                    let x = sys.basis_momentum(c, state);
                    let v = sys.basis_kinetic_gradient(c, state);
                    -(s + x) * lambda - v
                } else {
                    -s * lambda + sys.potential_basis_gradient(c - l, &state.q)
                }
            })
            .collect();
        Self { lambda, columns, y: -self.y * lambda + tau }
    }

    pub fn step<S>(
        &mut self,
        sys: &S,
        state: &ElState<N>,
        tau: &SVector<f64, N>,
        dt: f64,
    ) -> (SVector<f64, N>, DMatrix<f64>)
    where
        S: EulerLagrange<N> + ?Sized,
    {
        let mut x = self.pack();
        rk4_hold(&mut x, dt, |x| self.with_state(x).derivative(sys, state, tau).pack());
        *self = self.with_state(&x);
        (self.y, self.regressor(sys, state))
    }

    pub(crate) fn packed_len(params: usize) -> usize {
        N * params + N
    }

    pub(crate) fn pack(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.columns.iter().flat_map(|c| c.iter().copied()).collect();
        v.extend(self.y.iter());
        v
    }

    pub(crate) fn with_state(&self, x: &[f64]) -> Self {
        let w = self.columns.len();
        let columns = (0..w).map(|c| SVector::from_column_slice(&x[c * N..(c + 1) * N])).collect();
        Self { lambda: self.lambda, columns, y: SVector::from_column_slice(&x[w * N..w * N + N]) }
    }
}

/// Which regression a friction regressor augments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrictionKind {
    /// `Omega_R = H(p)[col(qd_i^2)]`, appended to the power-balance row.
    PowerBalance,
    /// `H(p)[diag(qd)]`, appended to the classical regressor.
    Classical,
}

/// Extra regressor entries for diagonal viscous friction `R qd`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionRegressor<const N: usize> {
    pub lambda: f64,
    pub kind: FrictionKind,
    pub state: SVector<f64, N>,
}

impl<const N: usize> FrictionRegressor<N> {
    pub fn new(lambda: f64, kind: FrictionKind) -> Result<Self> {
        check_pole(lambda)?;
        Ok(Self { lambda, kind, state: SVector::zeros() })
    }

    fn input(&self, state: &ElState<N>) -> SVector<f64, N> {
        match self.kind {
            FrictionKind::PowerBalance => state.qd.component_mul(&state.qd),
            FrictionKind::Classical => state.qd,
        }
    }

    pub fn derivative(&self, state: &ElState<N>) -> SVector<f64, N> {
        -self.state * self.lambda + self.input(state)
    }

    /// Regressor block: a row `1 x N` for the power balance, `diag` (`N x N`)
    /// for the classical form.
    pub fn regressor(&self) -> DMatrix<f64> {
        match self.kind {
            FrictionKind::PowerBalance => DMatrix::from_row_slice(1, N, self.state.as_slice()),
            FrictionKind::Classical => DMatrix::from_diagonal(&DVector::from_column_slice(self.state.as_slice())),
        }
    }

    pub fn step(&mut self, state: &ElState<N>, dt: f64) -> SVector<f64, N> {
        let mut x = self.state.as_slice().to_vec();
        rk4_hold(&mut x, dt, |x| {
            let tmp = Self { state: SVector::from_column_slice(x), ..self.clone() };
            tmp.derivative(state).as_slice().to_vec()
        });
        self.state = SVector::from_column_slice(&x);
        self.state
    }
}

/// One classical fourth-order step of `xdot = f(x)` (inputs held over the
/// step).
pub(crate) fn rk4_hold(x: &mut [f64], dt: f64, f: impl Fn(&[f64]) -> Vec<f64>) {
    let n = x.len();
    let k1 = f(x);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * k1[i]).collect();
    let k2 = f(&tmp);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * dt * k2[i]).collect();
    let k3 = f(&tmp);
    let tmp: Vec<f64> = (0..n).map(|i| x[i] + dt * k3[i]).collect();
    let k4 = f(&tmp);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::el_model::{theta_from_geometry, RobotGeometry, TwoLinkArm};
    use nalgebra::Vector2;
    use std::f64::consts::PI;

    #[test]
    fn energy_regressor_special_states() {
        let arm = TwoLinkArm::default();
        let hanging = ElState::at_rest(Vector2::new(-PI / 2.0, 0.0));
        assert!(arm.energy_regressor(&hanging).iter().all(|v| v.abs() < 1e-14));

        let start = ElState::at_rest(Vector2::new(0.6 * PI, 0.7 * PI));
        let w = arm.energy_regressor(&start);
        // 9.81 (1 + sin 1.3 pi), 9.81 (1 + sin 0.6 pi)
        let expected = [0.0, 0.0, 0.0, 1.873543, 19.139868];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn energy_regressor_matches_energy() {
        let arm = TwoLinkArm::default();
        let theta = theta_from_geometry(&RobotGeometry::reference()).unwrap();
        let s = ElState::new(Vector2::new(0.3, -1.2), Vector2::new(1.5, -0.7));
        let w = arm.energy_regressor(&s);
        let e: f64 = w.iter().zip(theta.as_slice()).map(|(a, b)| a * b).sum();
        assert!((e - arm.energy(&s, theta.as_slice())).abs() < 1e-12);
    }

    #[test]
    fn power_balance_at_rest_stays_zero() {
        let arm = TwoLinkArm::default();
        let s = ElState::at_rest(Vector2::new(0.2, 0.1));
        let mut lre = PowerBalanceLre::new(1.0, 5).unwrap();
        for _ in 0..1000 {
            let (y, _) = lre.step(&arm, &s, &Vector2::zeros(), 1e-2);
            assert_eq!(y, 0.0);
        }
    }

    #[test]
    fn constant_omega_decays_exponentially() {
        let arm = TwoLinkArm::default();
        let s = ElState::at_rest(Vector2::new(0.6 * PI, 0.7 * PI));
        let w0 = arm.energy_regressor(&s);
        let mut lre = PowerBalanceLre::new(1.0, 5).unwrap();
        assert_eq!(lre.regressor(&w0), w0);
        let dt = 1e-3;
        for k in 1..=3000 {
            let (_, omega) = lre.step(&arm, &s, &Vector2::zeros(), dt);
            let decay = (-(k as f64) * dt).exp();
            for (a, b) in omega.iter().zip(&w0) {
                assert!((a - b * decay).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matched_start_has_zero_regressor() {
        let arm = TwoLinkArm::default();
        let s = ElState::at_rest(Vector2::new(0.6 * PI, 0.7 * PI));
        let w0 = arm.energy_regressor(&s);
        let lre = PowerBalanceLre::matched(1.0, &w0).unwrap();
        assert!(lre.regressor(&w0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn classical_at_rest_kinetic_columns_vanish() {
        let arm = TwoLinkArm::default();
        let s = ElState::at_rest(Vector2::new(0.3, 0.9));
        let mut lre = ClassicalLre::<2>::new(1.0, 5).unwrap();
        let mut psi = DMatrix::zeros(2, 5);
        for _ in 0..20000 {
            psi = lre.step(&arm, &s, &Vector2::zeros(), 1e-3).1;
        }
        for c in 0..3 {
            assert!(psi.column(c).norm() < 1e-14);
        }
        // gravity columns settle at grad U_j / lambda
        let g0 = arm.potential_basis_gradient(0, &s.q);
        let g1 = arm.potential_basis_gradient(1, &s.q);
        let tol = 1e-7;
        assert!((psi.column(3) - g0 * (1.0 - (-20.0f64).exp())).norm() < tol);
        assert!((psi.column(4) - g1 * (1.0 - (-20.0f64).exp())).norm() < tol);
    }

    #[test]
    fn friction_regressor_first_order_response() {
        let s = ElState::new(Vector2::new(0.0, 0.0), Vector2::new(0.5, -2.0));
        let mut f = FrictionRegressor::<2>::new(1.0, FrictionKind::PowerBalance).unwrap();
        let dt = 1e-3;
        for k in 1..=5000 {
            let r = f.step(&s, dt);
            let gain = 1.0 - (-(k as f64) * dt).exp();
            assert!((r[0] - 0.25 * gain).abs() < 1e-10);
            assert!((r[1] - 4.0 * gain).abs() < 1e-10);
        }
        let mut f = FrictionRegressor::<2>::new(1.0, FrictionKind::PowerBalance).unwrap();
        let rest = ElState::at_rest(Vector2::new(1.0, 2.0));
        for _ in 0..100 {
            assert_eq!(f.step(&rest, dt), Vector2::zeros());
        }
    }

    #[test]
    fn rejects_bad_pole() {
        assert!(PowerBalanceLre::new(0.0, 5).is_err());
        assert!(ClassicalLre::<2>::new(-1.0, 5).is_err());
        assert!(FrictionRegressor::<2>::new(f64::NAN, FrictionKind::Classical).is_err());
    }
}
