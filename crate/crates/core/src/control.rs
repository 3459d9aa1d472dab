//! Slotine-Li passivity-based tracking controller and reference signals.
//!
//! With `qd_r = qd* - K2 q~` and `s = q~dot + K2 q~`, the law
//!
//! ```text
//! tau = M(q) qdd_r + C(q, qd) qd_r + grad U(q) - K1 s
//! ```
//!
//! closes the loop to `M sdot + (C + K1) s = 0`. All three model terms are
//! linear in the parameters, so evaluating them at an estimate never needs
//! the estimated inertia to be invertible.

use std::f64::consts::PI;

use nalgebra::{SVector, Vector2};

use crate::el_model::{ElState, EulerLagrange};
use crate::error::{Error, Result};

/// Diagonal gains `K1` (damping on `s`) and `K2` (error bandwidth).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains<const N: usize> {
    pub k1: SVector<f64, N>,
    pub k2: SVector<f64, N>,
}

impl<const N: usize> ControllerGains<N> {
    pub fn uniform(k1: f64, k2: f64) -> Result<Self> {
        let g = Self { k1: SVector::repeat(k1), k2: SVector::repeat(k2) };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1.iter().chain(self.k2.iter()).all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("k1/k2", "controller gains must be strictly positive"))
        }
    }
}

/// Desired position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference<const N: usize> {
    pub q: SVector<f64, N>,
    pub qd: SVector<f64, N>,
    pub qdd: SVector<f64, N>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesiredTrajectory {
    /// Constant set point.
    Regulation { target: Vector2<f64> },
    /// Sum-of-sinusoids path for the two-link arm.
    Tracking,
}

impl DesiredTrajectory {
    pub fn regulation_default() -> Self {
        DesiredTrajectory::Regulation { target: Vector2::new(0.2 * PI, 0.3 * PI) }
    }

    pub fn eval(&self, t: f64) -> Reference<2> {
        match *self {
            DesiredTrajectory::Regulation { target } => {
                Reference { q: target, qd: Vector2::zeros(), qdd: Vector2::zeros() }
            }
            DesiredTrajectory::Tracking => {
                let q = Vector2::new(
                    0.4 * PI * (0.4 * t).sin() + 0.3 * PI * (0.3 * t).sin() + 0.2 * PI,
                    0.3 * PI * (0.3 * t).cos() - 0.1 * PI * (0.5 * t).cos() + 0.3 * PI,
                );
                let qd = Vector2::new(
                    0.16 * PI * (0.4 * t).cos() + 0.09 * PI * (0.3 * t).cos(),
                    -0.09 * PI * (0.3 * t).sin() + 0.05 * PI * (0.5 * t).sin(),
                );
                let qdd = Vector2::new(
                    -0.064 * PI * (0.4 * t).sin() - 0.027 * PI * (0.3 * t).sin(),
                    -0.027 * PI * (0.3 * t).cos() + 0.025 * PI * (0.5 * t).cos(),
                );
                Reference { q, qd, qdd }
            }
        }
    }
}

/// Which reference a closed loop follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Regulation,
    Tracking,
}

pub fn reference_signals(kind: ReferenceKind, t: f64) -> Reference<2> {
    match kind {
        ReferenceKind::Regulation => DesiredTrajectory::regulation_default().eval(t),
        ReferenceKind::Tracking => DesiredTrajectory::Tracking.eval(t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors<const N: usize> {
    pub q_err: SVector<f64, N>,
    pub qd_r: SVector<f64, N>,
    pub s: SVector<f64, N>,
    pub qdd_r: SVector<f64, N>,
}

pub fn tracking_errors<const N: usize>(
    state: &ElState<N>,
    reference: &Reference<N>,
    gains: &ControllerGains<N>,
) -> TrackingErrors<N> {
    let q_err = state.q - reference.q;
    let qd_err = state.qd - reference.qd;
    TrackingErrors {
        q_err,
        qd_r: reference.qd - gains.k2.component_mul(&q_err),
        s: qd_err + gains.k2.component_mul(&q_err),
        qdd_r: reference.qdd - gains.k2.component_mul(&qd_err),
    }
}

/// Control torque for the parameters `theta_used` (true or estimated).
pub fn slotine_li<S, const N: usize>(
    sys: &S,
    state: &ElState<N>,
    theta_used: &[f64],
    reference: &Reference<N>,
    gains: &ControllerGains<N>,
) -> SVector<f64, N>
where
    S: EulerLagrange<N> + ?Sized,
{
    let e = tracking_errors(state, reference, gains);
    let m = sys.inertia_matrix(&state.q, theta_used);
    let c = sys.coriolis_matrix(&state.q, &state.qd, theta_used);
    m * e.qdd_r + c * e.qd_r + sys.gravity_vector(&state.q, theta_used) - gains.k1.component_mul(&e.s)
}

/// Lyapunov function `1/2 s' M(q) s` of the known-parameter loop.
pub fn sliding_energy<S, const N: usize>(sys: &S, q: &SVector<f64, N>, s: &SVector<f64, N>, theta: &[f64]) -> f64
where
    S: EulerLagrange<N> + ?Sized,
{
    0.5 * s.dot(&(sys.inertia_matrix(q, theta) * s))
}

/// Whether the certainty-equivalent inertia is positive definite.
pub fn inertia_positive_definite<S, const N: usize>(sys: &S, q: &SVector<f64, N>, theta: &[f64]) -> bool
where
    S: EulerLagrange<N> + ?Sized,
{
    sys.inertia_matrix(q, theta).cholesky().is_some()
}
