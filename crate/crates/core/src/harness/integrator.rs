//! Classical fourth-order Runge-Kutta on a fixed grid.

use crate::error::{Error, Result};

/// A first-order system `xdot = f(t, x)` over a flat state vector.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Called before each (sub)step covering `[t0, t1]`. Piecewise inputs
    /// latch the branch valid on the open interval here.
    fn begin_step(&mut self, _t0: f64, _t1: f64) {}

    /// Instants at which the right-hand side is discontinuous. The
    /// integrator always places a step boundary on them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Advances `x` across one step piece `[t, t + h]` free of
    /// breakpoints. The default is a single RK4 step; systems with parts
    /// that are better solved otherwise override it.
    fn advance(&mut self, rk: &mut Rk4, t: f64, x: &mut [f64], h: f64) -> Result<()> {
        rk.step(self, t, x, h)
    }
}

/// Reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Stage derivative at the start of the last step.
    pub fn first_stage(&self) -> &[f64] {
        &self.k1
    }

    #[allow(clippy::needless_range_loop)]
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &mut S, t: f64, x: &mut [f64], h: f64) -> Result<()> {
        sys.begin_step(t, t + h);
        let n = x.len();
        sys.derivative(t, x, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.derivative(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.derivative(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.derivative(t + h, &self.tmp, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Integrates from `t0` over `horizon` with nominal step `dt`.
///
/// `observe(k, t, x)` runs at the start (`k = 0`) and after every grid step
/// `t_k = t0 + k dt`; the last step is shortened to land on the horizon.
/// Grid steps straddling a breakpoint are split there. Returns the number
/// of grid steps.
pub fn integrate<S, F>(sys: &mut S, x: &mut [f64], t0: f64, horizon: f64, dt: f64, mut observe: F) -> Result<usize>
where
    S: OdeSystem + ?Sized,
    F: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("dt", format!("step must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config("horizon", format!("horizon must be positive, got {horizon}")));
    }
    assert_eq!(x.len(), sys.dim(), "state length does not match system dimension");

    let t_end = t0 + horizon;
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let snap = 1e-9 * dt;
    let mut breaks: Vec<f64> = sys.breakpoints().into_iter().filter(|b| *b > t0 && *b < t_end).collect();
    breaks.sort_by(f64::total_cmp);

    let mut rk = Rk4::new(x.len());
    observe(0, t0, x)?;
    for k in 0..steps {
        let a = t0 + k as f64 * dt;
        let b = if k + 1 == steps { t_end } else { t0 + (k + 1) as f64 * dt };
        let mut t = a;
        for &bp in breaks.iter().filter(|bp| **bp > a + snap && **bp < b - snap) {
            sys.advance(&mut rk, t, x, bp - t)?;
            t = bp;
        }
        sys.advance(&mut rk, t, x, b - t)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: b });
        }
        observe(k + 1, b, x)?;
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = -x[0];
            Ok(())
        }
    }

    /// `xdot = 1` before the switch, `0` after.
    struct Switch {
        at: f64,
        on: bool,
    }
    impl OdeSystem for Switch {
        fn dim(&self) -> usize {
            1
        }
        fn derivative(&self, _t: f64, _x: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = if self.on { 1.0 } else { 0.0 };
            Ok(())
        }
        fn begin_step(&mut self, t0: f64, t1: f64) {
            self.on = 0.5 * (t0 + t1) < self.at;
        }
        fn breakpoints(&self) -> Vec<f64> {
            vec![self.at]
        }
    }

    #[test]
    fn exponential_decay_accuracy() {
        let mut x = [1.0];
        let n = integrate(&mut Decay, &mut x, 0.0, 1.0, 0.01, |_, _, _| Ok(())).unwrap();
        assert_eq!(n, 100);
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_inside_step_is_exact() {
        let mut sys = Switch { at: 0.123_456, on: true };
        let mut x = [0.0];
        integrate(&mut sys, &mut x, 0.0, 1.0, 0.01, |_, _, _| Ok(())).unwrap();
        assert!((x[0] - 0.123_456).abs() < 1e-14);
    }

    #[test]
    fn observer_sees_every_grid_point() {
        let mut seen = Vec::new();
        let mut x = [1.0];
        integrate(&mut Decay, &mut x, 0.0, 0.05, 0.01, |k, t, _| {
            seen.push((k, t));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 6);
        assert!((seen[5].1 - 0.05).abs() < 1e-15);
    }

    /// Integrates `xdot = -k x` exactly through `advance`.
    struct Exact(f64);
    impl OdeSystem for Exact {
        fn dim(&self) -> usize {
            1
        }
        fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = -self.0 * x[0];
            Ok(())
        }
        fn advance(&mut self, _rk: &mut Rk4, _t: f64, x: &mut [f64], h: f64) -> Result<()> {
            x[0] *= (-self.0 * h).exp();
            Ok(())
        }
    }

    #[test]
    fn advance_override_replaces_runge_kutta() {
        let mut x = [1.0];
        integrate(&mut Exact(5000.0), &mut x, 0.0, 0.1, 1e-3, |_, _, _| Ok(())).unwrap();
        assert!(x[0] > 0.0 && x[0] < 1e-200);
    }

    #[test]
    fn rejects_bad_step() {
        let mut x = [1.0];
        assert!(integrate(&mut Decay, &mut x, 0.0, 1.0, 0.0, |_, _, _| Ok(())).is_err());
        assert!(integrate(&mut Decay, &mut x, 0.0, -1.0, 0.1, |_, _, _| Ok(())).is_err());
    }
}
