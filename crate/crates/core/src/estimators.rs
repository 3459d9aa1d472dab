//! Gradient parameter update laws.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `theta_hat_dot = Gamma Psi' (y - Psi theta_hat)` for an `n x w` regression.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGradient {
    pub theta_hat: DVector<f64>,
    pub gain: DMatrix<f64>,
}

impl VectorGradient {
    pub fn new(theta_hat: DVector<f64>, gain: DMatrix<f64>) -> Result<Self> {
        let w = theta_hat.len();
        if gain.shape() != (w, w) {
            return Err(Error::config("gamma", format!("gain must be {w} x {w}")));
        }
        if (&gain - gain.transpose()).amax() > 1e-12 * gain.amax().max(1.0) {
            return Err(Error::config("gamma", "gain must be symmetric"));
        }
        if gain.clone().cholesky().is_none() {
            return Err(Error::config("gamma", "gain must be positive definite"));
        }
        Ok(Self { theta_hat, gain })
    }

    /// `Gamma = gamma I`.
    pub fn scalar_gain(theta_hat: DVector<f64>, gamma: f64) -> Result<Self> {
        let w = theta_hat.len();
        Self::new(theta_hat, DMatrix::identity(w, w) * gamma)
    }

    pub fn rate(&self, theta_hat: &DVector<f64>, y: &DVector<f64>, regressor: &DMatrix<f64>) -> DVector<f64> {
        &self.gain * (regressor.transpose() * (y - regressor * theta_hat))
    }

    /// One step with `(y, Psi)` held. A power-balance pair is passed as a
    /// one-row regressor.
    pub fn step(&mut self, y: &DVector<f64>, regressor: &DMatrix<f64>, dt: f64) -> &DVector<f64> {
        let mut x = self.theta_hat.as_slice().to_vec();
        crate::lre::rk4_hold(&mut x, dt, |x| {
            self.rate(&DVector::from_column_slice(x), y, regressor).as_slice().to_vec()
        });
        self.theta_hat = DVector::from_vec(x);
        &self.theta_hat
    }
}

/// Scalar gradient `theta_hat_dot = gamma phi / (1 + phi^2)^k (y - phi theta_hat)`
/// with `k = 1` when normalized and `k = 0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGradient {
    pub theta_hat: f64,
    pub gamma: f64,
    pub normalized: bool,
}

impl ScalarGradient {
    pub fn new(theta_hat: f64, gamma: f64, normalized: bool) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("gamma", format!("scalar gain must be positive, got {gamma}")));
        }
        Ok(Self { theta_hat, gamma, normalized })
    }

    /// Unnormalized law on a mixed regression `Ymix_i = Delta theta_i`.
    pub fn drem(theta_hat: f64, gamma: f64) -> Result<Self> {
        Self::new(theta_hat, gamma, false)
    }

    /// Normalized law on the generated regression `Y = Phi_21 theta_i`.
    pub fn new_lre(theta_hat: f64, gamma: f64) -> Result<Self> {
        Self::new(theta_hat, gamma, true)
    }

    pub fn rate(&self, theta_hat: f64, y: f64, phi: f64) -> f64 {
        let g = if self.normalized { self.gamma * phi / (1.0 + phi * phi) } else { self.gamma * phi };
        g * (y - phi * theta_hat)
    }

    pub fn step(&mut self, y: f64, phi: f64, dt: f64) -> f64 {
        let mut x = [self.theta_hat];
        crate::lre::rk4_hold(&mut x, dt, |x| vec![self.rate(x[0], y, phi)]);
        self.theta_hat = x[0];
        self.theta_hat
    }
}

/// One step of the unnormalized DREM law.
pub fn drem_gradient_step(s: &mut ScalarGradient, mixed: f64, delta: f64, dt: f64) -> f64 {
    s.step(mixed, delta, dt)
}

/// One step of the law on the generated regression.
pub fn newlre_gradient_step(s: &mut ScalarGradient, y: f64, phi21: f64, dt: f64) -> f64 {
    s.step(y, phi21, dt)
}

pub fn vector_gradient_step<'a>(
    s: &'a mut VectorGradient,
    y: &DVector<f64>,
    regressor: &DMatrix<f64>,
    dt: f64,
) -> &'a DVector<f64> {
    s.step(y, regressor, dt)
}
