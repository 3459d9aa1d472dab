//! Generator of a new scalar regression with an exciting regressor.
//!
//! Starting from a scalar regression `Ymix = Delta theta` whose regressor
//! dies out, the dynamic extension
//!
//! ```text
//! zdot   = u2 Ymix + u3 z,              z(0)   = 0
//! xidot  = A(t) xi + col(-u1 z, 0),     xi(0)  = 0
//! Phidot = A(t) Phi,                    Phi(0) = I
//! A(t)   = [[0, u1], [u2 Delta, u3]]
//! ```
//!
//! yields `Y = z - xi_2 = Phi_21 theta`. With the pumping-and-damping inputs
//! `u1 = -alpha Delta`, `u2 = alpha`, `u3 = beta - (Phi_11^2 + Phi_21^2)/2`
//! the pair `(Phi_11, Phi_21)` is rotated by `alpha Delta` and pulled onto the
//! circle of radius `sqrt(2 beta)`, so `Phi_21` settles at a nonzero value
//! unless the accumulated rotation is a multiple of pi.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Bounded steering signal `alpha(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steering {
    /// `amplitude * sin(frequency * t)`.
    Sine { amplitude: f64, frequency: f64 },
    Constant(f64),
    Off,
}

impl Steering {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Steering::Sine { amplitude, frequency } => amplitude * (frequency * t).sin(),
            Steering::Constant(a) => a,
            Steering::Off => 0.0,
        }
    }
}

impl Default for Steering {
    fn default() -> Self {
        Steering::Sine { amplitude: 1.0, frequency: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpDampConfig {
    /// Energy level of the target circle, `0 < beta < 1/2`.
    pub beta: f64,
    pub alpha: Steering,
    /// Diagnostic margin for the excitation floor.
    pub epsilon: f64,
}

impl Default for PumpDampConfig {
    fn default() -> Self {
        Self { beta: 0.25, alpha: Steering::default(), epsilon: 1e-3 }
    }
}

impl PumpDampConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::config("beta", format!("must lie in (0, 1/2), got {}", self.beta)));
        }
        let bounded = match self.alpha {
            Steering::Sine { amplitude, frequency } => amplitude.is_finite() && frequency.is_finite(),
            Steering::Constant(a) => a.is_finite(),
            Steering::Off => true,
        };
        if !bounded {
            return Err(Error::config("alpha", "steering signal must be bounded"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringInputs {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

/// `u1 = -alpha Delta`, `u2 = alpha`, `u3 = -(1/2 (Phi_11^2 + Phi_21^2) - beta)`.
pub fn pump_damp_signals(phi: &Matrix2<f64>, delta: f64, t: f64, cfg: &PumpDampConfig) -> SteeringInputs {
    let alpha = cfg.alpha.eval(t);
    let v_tilde = 0.5 * (phi[(0, 0)].powi(2) + phi[(1, 0)].powi(2)) - cfg.beta;
    SteeringInputs { u1: -alpha * delta, u2: alpha, u3: -v_tilde }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorState {
    pub z: f64,
    pub xi: Vector2<f64>,
    pub phi: Matrix2<f64>,
}

/// `Y = Phi_21 theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewLre {
    pub y: f64,
    pub phi21: f64,
}

impl Default for GeneratorState {
    fn default() -> Self {
        Self::new()
    }
}

impl GeneratorState {
    pub const PACKED_LEN: usize = 7;

    pub fn new() -> Self {
        Self { z: 0.0, xi: Vector2::zeros(), phi: Matrix2::identity() }
    }

    pub fn derivative(&self, mixed: f64, delta: f64, u: &SteeringInputs) -> Self {
        let a = Matrix2::new(0.0, u.u1, u.u2 * delta, u.u3);
        Self {
            z: u.u2 * mixed + u.u3 * self.z,
            xi: a * self.xi + Vector2::new(-u.u1 * self.z, 0.0),
            phi: a * self.phi,
        }
    }

    /// One fourth-order step with `(Ymix, Delta, u)` held.
    pub fn step(&mut self, mixed: f64, delta: f64, u: &SteeringInputs, dt: f64) {
        let mut x = self.pack();
        crate::lre::rk4_hold(&mut x, dt, |x| Self::unpack(x).derivative(mixed, delta, u).pack().to_vec());
        *self = Self::unpack(&x);
    }

    pub fn output(&self) -> NewLre {
        NewLre { y: self.z - self.xi[1], phi21: self.phi[(1, 0)] }
    }

    pub(crate) fn pack(&self) -> [f64; 7] {
        [self.z, self.xi[0], self.xi[1], self.phi[(0, 0)], self.phi[(1, 0)], self.phi[(0, 1)], self.phi[(1, 1)]]
    }

    pub(crate) fn unpack(x: &[f64]) -> Self {
        Self {
            z: x[0],
            xi: Vector2::new(x[1], x[2]),
            phi: Matrix2::new(x[3], x[5], x[4], x[6]),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.pack().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Excitation diagnostics of one generator run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExcitationReport {
    /// `min_t (Phi_11^2 + Phi_21^2)`.
    pub min_radius_sq: f64,
    /// The minimum stays at or above `2 beta`.
    pub floor_held: bool,
    /// Mean of `Phi_21^2` over the final window (slope of `int Phi_21^2`).
    pub final_slope: f64,
    /// `int Phi_21^2` still grows linearly at the end of the run.
    pub persistent: bool,
    pub phi11_final: f64,
    /// `Phi_11` ends within `epsilon` of `sqrt(2 beta)`.
    pub degenerate: bool,
}

/// Summarizes a sampled generator trajectory. `window` is the fraction of
/// the horizon, counted from the end, used for the growth test.
pub fn check_excitation_floor(
    times: &[f64],
    phi11: &[f64],
    phi21: &[f64],
    cfg: &PumpDampConfig,
    window: f64,
) -> ExcitationReport {
    assert!(times.len() == phi11.len() && times.len() == phi21.len() && times.len() >= 2);
    let radius: Vec<f64> = phi11.iter().zip(phi21).map(|(a, b)| a * a + b * b).collect();
    let min_radius_sq = radius.iter().copied().fold(f64::INFINITY, f64::min);

    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let start = t_end - window * (t_end - t0);
    let mid = 0.5 * (start + t_end);
    let mean_sq = |from: f64, to: f64| {
        let mut area = 0.0;
        for k in 1..times.len() {
            if times[k - 1] >= from && times[k] <= to {
                area += 0.5 * (times[k] - times[k - 1]) * (phi21[k - 1].powi(2) + phi21[k].powi(2));
            }
        }
        area / (to - from)
    };
    let final_slope = mean_sq(start, t_end);
    let early = mean_sq(start, mid);
    let late = mean_sq(mid, t_end);
    let persistent = final_slope >= cfg.epsilon && late >= 0.5 * early;

    let phi11_final = *phi11.last().unwrap();
    ExcitationReport {
        min_radius_sq,
        floor_held: min_radius_sq >= 2.0 * cfg.beta - 1e-9,
        final_slope,
        persistent,
        phi11_final,
        degenerate: (phi11_final.abs() - (2.0 * cfg.beta).sqrt()).abs() < cfg.epsilon,
    }
}
