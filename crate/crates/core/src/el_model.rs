//! Simple Euler-Lagrange systems with linearly parameterized inertia and
//! potential energy, and the planar two-link manipulator instance.
//!
//! A system is described by known basis matrices `m_i(q)` and potential
//! functions `U_j(q)` such that
//!
//! ```text
//! M(q) = sum_i m_i(q) theta_i          (i = 1..l)
//! U(q) = sum_j U_j(q) theta_(l + j)    (j = 1..r)
//! ```
//!
//! Everything else (Coriolis matrix, gravity, energy, forward dynamics) is
//! derived from that decomposition by the provided methods of
//! [`EulerLagrange`]. Concrete plants may override the provided methods with
//! closed forms; the basis-sum routes stay available as free functions so the
//! two can be checked against each other.

use nalgebra::{SMatrix, SVector, Vector2};

use crate::error::{Error, Result};

/// Standard gravitational acceleration, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Forward dynamics refuses inertia matrices whose reciprocal condition
/// number (1-norm) falls below this.
pub const MIN_INERTIA_RCOND: f64 = 1e-12;

/// Joint positions and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElState<const N: usize> {
    pub q: SVector<f64, N>,
    pub qd: SVector<f64, N>,
}

impl<const N: usize> ElState<N> {
    pub fn new(q: SVector<f64, N>, qd: SVector<f64, N>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: SVector<f64, N>) -> Self {
        Self { q, qd: SVector::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// A simple EL system `d/dt[M(q) qd] - 1/2 grad_q[qd' M(q) qd] + grad U(q) = tau`
/// with a linear parameterization of `M` and `U` (fully actuated, `G = I`).
///
/// Parameter slices passed to the provided methods have length
/// [`param_count`](Self::param_count): the `l` inertia parameters first,
/// then the `r` potential parameters.
pub trait EulerLagrange<const N: usize> {
    /// Number of inertia parameters `l`.
    fn inertia_params(&self) -> usize;

    /// Number of potential parameters `r`.
    fn potential_params(&self) -> usize;

    /// Basis matrix `m_i(q)`, `i < l`.
    fn inertia_basis(&self, i: usize, q: &SVector<f64, N>) -> SMatrix<f64, N, N>;

    /// Partial derivative `d m_i / d q_k`.
    fn inertia_basis_partial(&self, i: usize, k: usize, q: &SVector<f64, N>)
        -> SMatrix<f64, N, N>;

    /// Potential basis function `U_j(q)`, `j < r`.
    fn potential_basis(&self, j: usize, q: &SVector<f64, N>) -> f64;

    /// Gradient of `U_j`.
    fn potential_basis_gradient(&self, j: usize, q: &SVector<f64, N>) -> SVector<f64, N>;

    fn param_count(&self) -> usize {
        self.inertia_params() + self.potential_params()
    }

    fn inertia_matrix(&self, q: &SVector<f64, N>, theta: &[f64]) -> SMatrix<f64, N, N> {
        basis_inertia(self, q, theta)
    }

    fn potential(&self, q: &SVector<f64, N>, theta: &[f64]) -> f64 {
        let l = self.inertia_params();
        (0..self.potential_params())
            .map(|j| self.potential_basis(j, q) * theta[l + j])
            .sum()
    }

    fn gravity_vector(&self, q: &SVector<f64, N>, theta: &[f64]) -> SVector<f64, N> {
        basis_gravity(self, q, theta)
    }

    fn coriolis_matrix(
        &self,
        q: &SVector<f64, N>,
        qd: &SVector<f64, N>,
        theta: &[f64],
    ) -> SMatrix<f64, N, N> {
        christoffel_coriolis(self, q, qd, theta)
    }

    /// Stored energy `1/2 qd' M(q) qd + U(q)`.
    fn energy(&self, state: &ElState<N>, theta: &[f64]) -> f64 {
        let m = self.inertia_matrix(&state.q, theta);
        0.5 * state.qd.dot(&(m * state.qd)) + self.potential(&state.q, theta)
    }

    /// Energy regressor `omega` with `energy = omega' theta`.
    fn energy_regressor(&self, state: &ElState<N>) -> Vec<f64> {
        let l = self.inertia_params();
        let mut out = Vec::with_capacity(self.param_count());
        for i in 0..l {
            let mi = self.inertia_basis(i, &state.q);
            out.push(0.5 * state.qd.dot(&(mi * state.qd)));
        }
        for j in 0..self.potential_params() {
            out.push(self.potential_basis(j, &state.q));
        }
        out
    }

    /// `m_i(q) qd`, the quantity differentiated in the classical regressor.
    fn basis_momentum(&self, i: usize, state: &ElState<N>) -> SVector<f64, N> {
        self.inertia_basis(i, &state.q) * state.qd
    }

    /// `1/2 grad_q (qd' m_i(q) qd)`.
    fn basis_kinetic_gradient(&self, i: usize, state: &ElState<N>) -> SVector<f64, N> {
        SVector::from_fn(|k, _| {
            let dm = self.inertia_basis_partial(i, k, &state.q);
            0.5 * state.qd.dot(&(dm * state.qd))
        })
    }

    /// Joint accelerations `M^-1 (tau - C qd - grad U - R qd)`.
    ///
    /// `damping` holds the diagonal of a viscous friction matrix `R`.
    fn forward_dynamics(
        &self,
        state: &ElState<N>,
        tau: &SVector<f64, N>,
        theta: &[f64],
        damping: Option<&SVector<f64, N>>,
    ) -> Result<SVector<f64, N>> {
        let m = self.inertia_matrix(&state.q, theta);
        let inv = m.try_inverse().ok_or(Error::SingularInertia { rcond: 0.0 })?;
        let rcond = 1.0 / (col_norm1(&m) * col_norm1(&inv));
        if !(rcond >= MIN_INERTIA_RCOND) {
            return Err(Error::SingularInertia { rcond });
        }
        let c = self.coriolis_matrix(&state.q, &state.qd, theta);
        let mut rhs = tau - c * state.qd - self.gravity_vector(&state.q, theta);
        if let Some(r) = damping {
            rhs -= r.component_mul(&state.qd);
        }
        Ok(inv * rhs)
    }
}

fn col_norm1<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `sum_i m_i(q) theta_i`.
pub fn basis_inertia<S, const N: usize>(
    sys: &S,
    q: &SVector<f64, N>,
    theta: &[f64],
) -> SMatrix<f64, N, N>
where
    S: EulerLagrange<N> + ?Sized,
{
    (0..sys.inertia_params()).fold(SMatrix::zeros(), |acc, i| {
        acc + sys.inertia_basis(i, q) * theta[i]
    })
}

/// `sum_j grad U_j(q) theta_(l + j)`.
pub fn basis_gravity<S, const N: usize>(sys: &S, q: &SVector<f64, N>, theta: &[f64]) -> SVector<f64, N>
where
    S: EulerLagrange<N> + ?Sized,
{
    let l = sys.inertia_params();
    (0..sys.potential_params()).fold(SVector::zeros(), |acc, j| {
        acc + sys.potential_basis_gradient(j, q) * theta[l + j]
    })
}

/// Coriolis matrix from Christoffel symbols of the first kind,
/// `C_kj = sum_i 1/2 (dM_kj/dq_i + dM_ki/dq_j - dM_ij/dq_k) qd_i`.
///
/// This is the choice for which `Mdot - 2C` is skew-symmetric.
pub fn christoffel_coriolis<S, const N: usize>(
    sys: &S,
    q: &SVector<f64, N>,
    qd: &SVector<f64, N>,
    theta: &[f64],
) -> SMatrix<f64, N, N>
where
    S: EulerLagrange<N> + ?Sized,
{
    let dm: Vec<SMatrix<f64, N, N>> = (0..N)
        .map(|k| {
            (0..sys.inertia_params()).fold(SMatrix::zeros(), |acc, p| {
                acc + sys.inertia_basis_partial(p, k, q) * theta[p]
            })
        })
        .collect();
    SMatrix::from_fn(|k, j| {
        (0..N)
            .map(|i| 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qd[i])
            .sum()
    })
}

/// Link lengths and masses of the planar two-link arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotGeometry {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
}

impl RobotGeometry {
    /// Lengths and masses used in the reference experiments.
    pub fn reference() -> Self {
        Self { l1: 0.7, l2: 0.8, m1: 1.5, m2: 0.5, g: STANDARD_GRAVITY }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("g", self.g),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidGeometry { field, value });
            }
        }
        Ok(())
    }
}

/// The five lumped parameters of the two-link arm: three inertia
/// parameters (kg m^2) followed by two gravity parameters (kg m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaVector(pub [f64; 5]);

impl ThetaVector {
    pub const DIM: usize = 5;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Positive definiteness of `M(q)` for every `q`: `theta_1 > 0`,
    /// `theta_3 > 0` and `det M = theta_1 theta_3 - theta_3^2 - theta_2^2 cos^2 q_2 > 0`
    /// at its minimum `cos^2 q_2 = 1`.
    pub fn validate(&self) -> Result<()> {
        let [t1, t2, t3, _, _] = self.0;
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTheta("non-finite entry".into()));
        }
        if !(t1 > 0.0 && t3 > 0.0) {
            return Err(Error::InvalidTheta(format!("theta_1 = {t1} and theta_3 = {t3} must be positive")));
        }
        let det_min = t1 * t3 - t3 * t3 - t2 * t2;
        if !(det_min > 0.0) {
            return Err(Error::InvalidTheta(format!("inertia not positive definite (min det {det_min})")));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ThetaVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Lumped parameters from raw lengths and masses, without validation.
pub fn lumped_parameters(l1: f64, l2: f64, m1: f64, m2: f64) -> ThetaVector {
    ThetaVector([
        l2 * l2 * m2 + l1 * l1 * (m1 + m2),
        l1 * l2 * m2,
        l2 * l2 * m2,
        l2 * m2,
        l1 * (m1 + m2),
    ])
}

pub fn theta_from_geometry(geom: &RobotGeometry) -> Result<ThetaVector> {
    geom.validate()?;
    Ok(lumped_parameters(geom.l1, geom.l2, geom.m1, geom.m2))
}

/// Planar two-link manipulator moving in a vertical plane, point masses at
/// the link tips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkArm {
    pub g: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        Self { g: STANDARD_GRAVITY }
    }
}

impl TwoLinkArm {
    pub fn new(g: f64) -> Self {
        Self { g }
    }
}

impl EulerLagrange<2> for TwoLinkArm {
    fn inertia_params(&self) -> usize {
        3
    }

    fn potential_params(&self) -> usize {
        2
    }

    fn inertia_basis(&self, i: usize, q: &Vector2<f64>) -> SMatrix<f64, 2, 2> {
        match i {
            0 => SMatrix::<f64, 2, 2>::new(1.0, 0.0, 0.0, 0.0),
            1 => SMatrix::<f64, 2, 2>::new(2.0, 1.0, 1.0, 0.0) * q[1].cos(),
            2 => SMatrix::<f64, 2, 2>::new(0.0, 1.0, 1.0, 1.0),
            _ => panic!("inertia basis index {i} out of range"),
        }
    }

    fn inertia_basis_partial(&self, i: usize, k: usize, q: &Vector2<f64>) -> SMatrix<f64, 2, 2> {
        match (i, k) {
            (1, 1) => SMatrix::<f64, 2, 2>::new(2.0, 1.0, 1.0, 0.0) * -q[1].sin(),
            (0..=2, 0..=1) => SMatrix::zeros(),
            _ => panic!("inertia basis partial ({i}, {k}) out of range"),
        }
    }

    fn potential_basis(&self, j: usize, q: &Vector2<f64>) -> f64 {
        match j {
            0 => self.g * (1.0 + (q[0] + q[1]).sin()),
            1 => self.g * (1.0 + q[0].sin()),
            _ => panic!("potential basis index {j} out of range"),
        }
    }

    fn potential_basis_gradient(&self, j: usize, q: &Vector2<f64>) -> Vector2<f64> {
        match j {
            0 => {
                let c = self.g * (q[0] + q[1]).cos();
                Vector2::new(c, c)
            }
            1 => Vector2::new(self.g * q[0].cos(), 0.0),
            _ => panic!("potential basis index {j} out of range"),
        }
    }

    fn inertia_matrix(&self, q: &Vector2<f64>, theta: &[f64]) -> SMatrix<f64, 2, 2> {
        let c2 = q[1].cos();
        let off = theta[2] + theta[1] * c2;
        SMatrix::<f64, 2, 2>::new(theta[0] + 2.0 * theta[1] * c2, off, off, theta[2])
    }

    fn potential(&self, q: &Vector2<f64>, theta: &[f64]) -> f64 {
        theta[3] * self.g * (1.0 + (q[0] + q[1]).sin()) + theta[4] * self.g * (1.0 + q[0].sin())
    }

    fn gravity_vector(&self, q: &Vector2<f64>, theta: &[f64]) -> Vector2<f64> {
        let c12 = (q[0] + q[1]).cos();
        Vector2::new(
            self.g * (theta[3] * c12 + theta[4] * q[0].cos()),
            self.g * theta[3] * c12,
        )
    }

    fn coriolis_matrix(&self, q: &Vector2<f64>, qd: &Vector2<f64>, theta: &[f64]) -> SMatrix<f64, 2, 2> {
        let h = theta[1] * q[1].sin();
        SMatrix::<f64, 2, 2>::new(-h * qd[1], -h * (qd[0] + qd[1]), h * qd[0], 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn theta() -> ThetaVector {
        theta_from_geometry(&RobotGeometry::reference()).unwrap()
    }

    #[test]
    fn reference_geometry_lumped_parameters() {
        // hand substitution of l1 = 0.7, l2 = 0.8, m1 = 1.5, m2 = 0.5
        let expected = [1.30, 0.28, 0.32, 0.40, 1.40];
        for (a, b) in theta().0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn massless_first_link_and_vanishing_second_link() {
        let t = lumped_parameters(1.0, 1.0, 0.0, 1.0);
        assert_eq!(t.0, [2.0, 1.0, 1.0, 1.0, 1.0]);
        let t = lumped_parameters(0.7, 0.0, 1.5, 0.5);
        assert_eq!((t[1], t[2], t[3]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn geometry_rejects_nonpositive_fields() {
        let mut g = RobotGeometry::reference();
        g.m1 = 0.0;
        assert!(matches!(theta_from_geometry(&g), Err(Error::InvalidGeometry { field: "m1", .. })));
        g = RobotGeometry::reference();
        g.l2 = -0.1;
        assert!(theta_from_geometry(&g).is_err());
        g = RobotGeometry::reference();
        g.g = f64::NAN;
        assert!(theta_from_geometry(&g).is_err());
    }

    #[test]
    fn theta_validation() {
        assert!(theta().validate().is_ok());
        assert!(ThetaVector([1.0, 1.0, 1.0, 0.0, 0.0]).validate().is_err());
        assert!(ThetaVector([0.0; 5]).validate().is_err());
    }

    #[test]
    fn inertia_special_angles() {
        let arm = TwoLinkArm::default();
        let t = theta();
        let m = arm.inertia_matrix(&Vector2::new(0.3, PI / 2.0), t.as_slice());
        assert!((m - SMatrix::<f64, 2, 2>::new(t[0], t[2], t[2], t[2])).norm() < 1e-15);
        let m = arm.inertia_matrix(&Vector2::new(-1.0, 0.0), t.as_slice());
        let expected = SMatrix::<f64, 2, 2>::new(t[0] + 2.0 * t[1], t[2] + t[1], t[2] + t[1], t[2]);
        assert_eq!(m, expected);
    }

    #[test]
    fn potential_values() {
        let arm = TwoLinkArm::default();
        let t = theta();
        assert!(arm.potential(&Vector2::new(-PI / 2.0, 0.0), t.as_slice()).abs() < 1e-14);
        // (0.40 + 1.40) * 9.81
        assert!((arm.potential(&Vector2::zeros(), t.as_slice()) - 17.658).abs() < 1e-12);
    }

    #[test]
    fn coriolis_vanishes_at_rest_and_straight_elbow() {
        let arm = TwoLinkArm::default();
        let t = theta();
        let c = arm.coriolis_matrix(&Vector2::new(0.4, 1.1), &Vector2::zeros(), t.as_slice());
        assert_eq!(c, SMatrix::<f64, 2, 2>::zeros());
        let c = arm.coriolis_matrix(&Vector2::new(0.4, 0.0), &Vector2::new(2.0, -3.0), t.as_slice());
        assert!(c.norm() < 1e-15);
    }

    #[test]
    fn equilibrium_torque_gives_zero_acceleration() {
        let arm = TwoLinkArm::default();
        let t = theta();
        let s = ElState::at_rest(Vector2::new(0.3, -0.8));
        let tau = arm.gravity_vector(&s.q, t.as_slice());
        let qdd = arm.forward_dynamics(&s, &tau, t.as_slice(), None).unwrap();
        assert!(qdd.norm() < 1e-12);

        let hanging = ElState::at_rest(Vector2::new(-PI / 2.0, 0.0));
        let qdd = arm.forward_dynamics(&hanging, &Vector2::zeros(), t.as_slice(), None).unwrap();
        assert!(qdd.norm() < 1e-12);
    }

    #[test]
    fn singular_inertia_is_rejected() {
        let arm = TwoLinkArm::default();
        let s = ElState::at_rest(Vector2::new(0.0, 0.0));
        let err = arm.forward_dynamics(&s, &Vector2::zeros(), &[0.0; 5], None).unwrap_err();
        assert!(matches!(err, Error::SingularInertia { .. }));
        // rank one: theta_1 theta_3 = theta_3^2 + theta_2^2 at q2 = 0
        let err = arm
            .forward_dynamics(&s, &Vector2::zeros(), &[2.0, 1.0, 1.0, 0.0, 0.0], None)
            .unwrap_err();
        assert!(matches!(err, Error::SingularInertia { .. }));
    }

    #[test]
    fn rest_energy_is_potential() {
        let arm = TwoLinkArm::default();
        let t = theta();
        let s = ElState::at_rest(Vector2::new(0.6 * PI, 0.7 * PI));
        assert_eq!(arm.energy(&s, t.as_slice()), arm.potential(&s.q, t.as_slice()));
    }
}
