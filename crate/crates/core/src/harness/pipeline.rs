//! The full identification / control loop as one flat ODE.
//!
//! State layout, in order: plant `(q, qd)`, regression filters, optional
//! friction filter, regressor extension `(Z, Psi)`, one generator per
//! parameter, the three estimates (vector gradient, DREM, new regression)
//! and running integrals used by the diagnostics.
//!
//! Plant, filters and extension are advanced by RK4. Everything after the
//! mixing step is linear in its own state with coefficients that scale with
//! `Delta^2` and `alpha Delta`, so those blocks take an exponential step per
//! grid piece, fed by the upstream signals at the Gauss nodes of the RK4
//! step.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::control::{slotine_li, tracking_errors, ControllerGains, DesiredTrajectory, Reference};
use crate::drem::{adjugate_and_det, DremState};
use crate::el_model::{theta_from_geometry, ElState, EulerLagrange, TwoLinkArm};
use crate::error::{Error, Result};
use crate::lre::{ClassicalLre, PowerBalanceLre};
use crate::lre_gen::{pump_damp_signals, GeneratorState, NewLre};

use super::config::{input_signal, pulse, EstimatorChain, InputKind, LreInit, Parameterization, ScenarioConfig, PULSE_END};
use super::exponential::{exp_phi1, expm2, hermite, relax_scalar, relax_vector, GAUSS_NODES};
use super::integrator::{OdeSystem, Rk4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub params: usize,
    pub lre: usize,
    pub lre_len: usize,
    pub friction: Option<usize>,
    pub drem: usize,
    pub generators: usize,
    pub grad: usize,
    pub drem_est: usize,
    pub newlre_est: usize,
    pub diag: usize,
    pub len: usize,
}

impl Layout {
    fn new(cfg: &ScenarioConfig) -> Self {
        let p = cfg.param_count();
        let lre_len = match cfg.parameterization {
            Parameterization::PowerBalance => PowerBalanceLre::packed_len(5),
            Parameterization::Classical => ClassicalLre::<2>::packed_len(5),
        };
        let lre = 4;
        let mut next = lre + lre_len;
        let friction = cfg.estimate_friction.then(|| {
            next += 2;
            next - 2
        });
        let drem = next;
        let generators = drem + DremState::packed_len(p);
        let grad = generators + GeneratorState::PACKED_LEN * p;
        let drem_est = grad + p;
        let newlre_est = drem_est + p;
        let diag = newlre_est + p;
        Self { params: p, lre, lre_len, friction, drem, generators, grad, drem_est, newlre_est, diag, len: diag + 4 + 2 * p }
    }

    fn generator(&self, i: usize) -> usize {
        self.generators + GeneratorState::PACKED_LEN * i
    }

    fn int_phi21_sq(&self, i: usize) -> usize {
        self.diag + 4 + i
    }

    fn int_u3(&self, i: usize) -> usize {
        self.diag + 4 + self.params + i
    }
}

/// Every signal of the loop at one instant.
#[derive(Debug, Clone)]
pub struct Signals {
    pub state: ElState<2>,
    pub tau: Vector2<f64>,
    pub qdd: Vector2<f64>,
    pub reference: Option<Reference<2>>,
    /// Filtered output (one entry for the power balance, two otherwise).
    pub y: DVector<f64>,
    /// Regressor, `rows(y) x params`.
    pub regressor: DMatrix<f64>,
    pub drem: DremState,
    pub mixed: DVector<f64>,
    pub delta: f64,
    pub generators: Vec<GeneratorState>,
    pub new_lre: Vec<NewLre>,
    pub u3: Vec<f64>,
    pub alpha_delta: f64,
    pub theta_grad: DVector<f64>,
    pub theta_drem: DVector<f64>,
    pub theta_newlre: DVector<f64>,
    /// Estimate selected by the chain (the true vector for `known`).
    pub theta_used: DVector<f64>,
}

/// The coupled plant / filters / estimators / controller system.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub cfg: ScenarioConfig,
    pub arm: TwoLinkArm,
    pub layout: Layout,
    /// True parameters, friction coefficients appended when estimated.
    pub theta: DVector<f64>,
    gains: ControllerGains<2>,
    trajectory: Option<DesiredTrajectory>,
    /// Pulse branch latched for the current step; `None` evaluates `t <= 2`.
    pulse_on: Option<bool>,
}

impl CoupledSystem {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let theta5 = theta_from_geometry(&cfg.geometry)?;
        let mut theta = theta5.as_slice().to_vec();
        if cfg.estimate_friction {
            let r = cfg.friction.unwrap_or_else(Vector2::zeros);
            theta.extend(r.iter());
        }
        let trajectory = match cfg.input {
            InputKind::Regulation => Some(DesiredTrajectory::regulation_default()),
            InputKind::Tracking => Some(DesiredTrajectory::Tracking),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            arm: TwoLinkArm::new(cfg.geometry.g),
            layout: Layout::new(cfg),
            theta: DVector::from_vec(theta),
            gains: ControllerGains::uniform(cfg.k1, cfg.k2)?,
            trajectory,
            pulse_on: None,
        })
    }

    /// Copy that evaluates piecewise inputs from time alone, for sampling.
    pub fn unlatched(&self) -> Self {
        Self { pulse_on: None, ..self.clone() }
    }

    fn theta5(&self) -> &[f64] {
        &self.theta.as_slice()[..5]
    }

    pub fn initial_state(&self) -> Result<Vec<f64>> {
        let l = &self.layout;
        let cfg = &self.cfg;
        let mut x = vec![0.0; l.len];
        x[0..2].copy_from_slice(cfg.q0.as_slice());
        x[2..4].copy_from_slice(cfg.qd0.as_slice());
        if cfg.parameterization == Parameterization::PowerBalance && cfg.lre_init == LreInit::Matched {
            let omega0 = self.arm.energy_regressor(&ElState::new(cfg.q0, cfg.qd0));
            let pb = PowerBalanceLre::matched(cfg.lambda, &omega0)?;
            x[l.lre..l.lre + l.lre_len].copy_from_slice(&pb.pack());
        }
        for i in 0..l.params {
            x[l.generator(i)..l.generator(i) + GeneratorState::PACKED_LEN].copy_from_slice(&GeneratorState::new().pack());
            x[l.grad + i] = cfg.theta_hat0;
            x[l.drem_est + i] = cfg.theta_hat0;
            x[l.newlre_est + i] = cfg.theta_hat0;
        }
        Ok(x)
    }

    fn open_loop_torque(&self, t: f64) -> Result<Vector2<f64>> {
        match self.cfg.input {
            InputKind::TauB => Ok(pulse(self.pulse_on.unwrap_or(t <= PULSE_END))),
            kind => input_signal(kind, t),
        }
    }

    fn plant_state(x: &[f64]) -> ElState<2> {
        ElState::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3]))
    }

    fn estimate(&self, x: &[f64], offset: usize) -> DVector<f64> {
        DVector::from_column_slice(&x[offset..offset + self.layout.params])
    }

    fn theta_used(&self, x: &[f64]) -> DVector<f64> {
        let l = &self.layout;
        match self.cfg.estimator {
            EstimatorChain::Gradient => self.estimate(x, l.grad),
            EstimatorChain::Drem => self.estimate(x, l.drem_est),
            EstimatorChain::DremNewLre => self.estimate(x, l.newlre_est),
            EstimatorChain::Known => self.theta.clone(),
        }
    }

    fn torque(&self, t: f64, state: &ElState<2>, x: &[f64]) -> Result<(Vector2<f64>, Option<Reference<2>>)> {
        match &self.trajectory {
            Some(traj) => {
                let r = traj.eval(t);
                let th = self.theta_used(x);
                Ok((slotine_li(&self.arm, state, &th.as_slice()[..5], &r, &self.gains), Some(r)))
            }
            None => Ok((self.open_loop_torque(t)?, None)),
        }
    }

    /// Filtered regression `y = regressor theta` read from the filter states.
    fn regression(&self, state: &ElState<2>, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let l = &self.layout;
        let p = l.params;
        let lre_x = &x[l.lre..l.lre + l.lre_len];
        let fr = l.friction.map(|o| Vector2::new(x[o], x[o + 1]));
        Ok(match self.cfg.parameterization {
            Parameterization::PowerBalance => {
                let pb = PowerBalanceLre::new(self.cfg.lambda, 5)?.with_state(lre_x);
                let omega = pb.regressor(&self.arm.energy_regressor(state));
                let mut row = DMatrix::zeros(1, p);
                for (c, v) in omega.iter().enumerate() {
                    row[(0, c)] = *v;
                }
                if let Some(f) = fr {
                    // the filtered loss `qd' R qd` is supplied power not stored
                    row[(0, 5)] = f[0];
                    row[(0, 6)] = f[1];
                }
                (DVector::from_element(1, pb.y), row)
            }
            Parameterization::Classical => {
                let cl = ClassicalLre::<2>::new(self.cfg.lambda, 5)?.with_state(lre_x);
                let psi5 = cl.regressor(&self.arm, state);
                let mut psi = DMatrix::zeros(2, p);
                psi.columns_mut(0, 5).copy_from(&psi5);
                if let Some(f) = fr {
                    psi[(0, 5)] = f[0];
                    psi[(1, 6)] = f[1];
                }
                (DVector::from_column_slice(cl.y.as_slice()), psi)
            }
        })
    }

    fn drem_state(&self, x: &[f64]) -> Result<DremState> {
        let l = &self.layout;
        Ok(DremState::new(self.cfg.lambda_e, l.params)?.with_state(&x[l.drem..l.drem + DremState::packed_len(l.params)]))
    }

    fn generator(&self, x: &[f64], i: usize) -> GeneratorState {
        let o = self.layout.generator(i);
        GeneratorState::unpack(&x[o..o + GeneratorState::PACKED_LEN])
    }

    /// Evaluates every loop signal at `(t, x)`.
    pub fn signals(&self, t: f64, x: &[f64]) -> Result<Signals> {
        let l = &self.layout;
        let p = l.params;
        let state = Self::plant_state(x);
        let (tau, reference) = self.torque(t, &state, x)?;
        let qdd = self.arm.forward_dynamics(&state, &tau, self.theta5(), self.cfg.friction.as_ref())?;
        let (y, regressor) = self.regression(&state, x)?;
        let drem = self.drem_state(x)?;
        let (adj, delta) = adjugate_and_det(&drem.psi);
        let mixed = adj * &drem.z;
        let generators: Vec<GeneratorState> = (0..p).map(|i| self.generator(x, i)).collect();
        let new_lre = generators.iter().map(|g| g.output()).collect();
        let u3 = generators.iter().map(|g| pump_damp_signals(&g.phi, delta, t, &self.cfg.pump).u3).collect();
        let alpha_delta = self.cfg.pump.alpha.eval(t) * delta;

        Ok(Signals {
            state,
            tau,
            qdd,
            reference,
            y,
            regressor,
            drem,
            mixed,
            delta,
            generators,
            new_lre,
            u3,
            alpha_delta,
            theta_grad: self.estimate(x, l.grad),
            theta_drem: self.estimate(x, l.drem_est),
            theta_newlre: self.estimate(x, l.newlre_est),
            theta_used: self.theta_used(x),
        })
    }

    /// Right-hand side of the RK4 block. Entries from the generators on
    /// are zero apart from the work and dissipation integrals.
    fn fill_derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let l = &self.layout;
        let state = Self::plant_state(x);
        let (tau, _) = self.torque(t, &state, x)?;
        let qdd = self.arm.forward_dynamics(&state, &tau, self.theta5(), self.cfg.friction.as_ref())?;
        dx[0] = x[2];
        dx[1] = x[3];
        dx[2] = qdd[0];
        dx[3] = qdd[1];

        let lre_x = &x[l.lre..l.lre + l.lre_len];
        let lre_dx = match self.cfg.parameterization {
            Parameterization::PowerBalance => {
                let pb = PowerBalanceLre::new(self.cfg.lambda, 5)?.with_state(lre_x);
                pb.derivative(&self.arm.energy_regressor(&state), state.qd.dot(&tau)).pack()
            }
            Parameterization::Classical => {
                let cl = ClassicalLre::<2>::new(self.cfg.lambda, 5)?.with_state(lre_x);
                cl.derivative(&self.arm, &state, &tau).pack()
            }
        };
        dx[l.lre..l.lre + l.lre_len].copy_from_slice(&lre_dx);
        let qd = state.qd;
        if let Some(o) = l.friction {
            let input = match self.cfg.parameterization {
                Parameterization::PowerBalance => qd.component_mul(&qd),
                Parameterization::Classical => qd,
            };
            for k in 0..2 {
                dx[o + k] = -self.cfg.lambda * x[o + k] + input[k];
            }
        }

        let (y, regressor) = self.regression(&state, x)?;
        let drem_len = DremState::packed_len(l.params);
        dx[l.drem..l.drem + drem_len].copy_from_slice(&self.drem_state(x)?.derivative(&y, &regressor).pack());

        dx[l.generators..].fill(0.0);
        dx[l.diag] = qd.dot(&tau);
        dx[l.diag + 1] = self.cfg.friction.map_or(0.0, |r| qd.dot(&r.component_mul(&qd)));
        Ok(())
    }

    /// Upstream signals at the Gauss nodes of the step from `x0` to `x1`.
    fn gauss_nodes(&self, t: f64, h: f64, x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64]) -> Result<[Node; 2]> {
        let up = self.layout.generators;
        let mut buf = x0.to_vec();
        let mut node = |c: f64| -> Result<Node> {
            hermite(&x0[..up], &f0[..up], &x1[..up], &f1[..up], h, c, &mut buf[..up]);
            let (y, regressor) = self.regression(&Self::plant_state(&buf), &buf)?;
            let drem = self.drem_state(&buf)?;
            let (adj, delta) = adjugate_and_det(&drem.psi);
            Ok(Node { y, regressor, mixed: adj * &drem.z, delta, alpha: self.cfg.pump.alpha.eval(t + c * h) })
        };
        Ok([node(GAUSS_NODES[0])?, node(GAUSS_NODES[1])?])
    }

    /// Exponential step of estimators, generators and their integrals.
    fn propagate(&self, t: f64, h: f64, x0: &[f64], f0: &[f64], x1: &mut [f64], f1: &[f64]) -> Result<()> {
        let l = self.layout;
        let p = l.params;
        let nodes = self.gauss_nodes(t, h, x0, f0, x1, f1)?;

        let g = self.cfg.gamma;
        let a = nodes.each_ref().map(|n| n.regressor.tr_mul(&n.regressor) * g);
        let b = nodes.each_ref().map(|n| n.regressor.tr_mul(&n.y) * g);
        let grad = relax_vector(&self.estimate(x0, l.grad), [&a[0], &a[1]], [&b[0], &b[1]], h);
        x1[l.grad..l.grad + p].copy_from_slice(grad.as_slice());

        let gi = self.cfg.gamma_i;
        for i in 0..p {
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            for (k, n) in nodes.iter().enumerate() {
                let d = n.delta;
                let norm = if self.cfg.drem_normalized { 1.0 + d * d } else { 1.0 };
                a[k] = gi * d * d / norm;
                b[k] = gi * d * n.mixed[i] / norm;
            }
            x1[l.drem_est + i] = relax_scalar(x0[l.drem_est + i], a, b, h);
        }

        let mut flow: Option<GeneratorFlow> = None;
        for i in 0..p {
            let gen = self.generator(x0, i);
            if flow.as_ref().is_none_or(|f| f.phi0 != gen.phi) {
                flow = Some(self.generator_flow(t, h, &gen.phi, &nodes));
            }
            let f = flow.as_ref().expect("flow set above");
            let w0 = Vector3::new(gen.xi[0], gen.xi[1], gen.z);
            let forcing = nodes.each_ref().map(|n| Vector3::new(0.0, 0.0, n.alpha * n.mixed[i]));
            let (mut an, mut bn) = ([0.0; 2], [0.0; 2]);
            for k in 0..2 {
                let (e, pk) = &f.node_maps[k];
                let w = e * w0 + pk * (forcing[k] * (GAUSS_NODES[k] * h));
                let y = w[2] - w[1];
                let phi21 = f.phi_nodes[k][(1, 0)];
                let norm = 1.0 + phi21 * phi21;
                an[k] = gi * phi21 * phi21 / norm;
                bn[k] = gi * phi21 * y / norm;
            }
            x1[l.newlre_est + i] = relax_scalar(x0[l.newlre_est + i], an, bn, h);

            let (e, pk) = &f.step_map;
            let w1 = e * w0 + pk * ((forcing[0] + forcing[1]) * (0.5 * h));
            let next = GeneratorState { z: w1[2], xi: Vector2::new(w1[0], w1[1]), phi: f.phi1 };
            x1[l.generator(i)..l.generator(i) + GeneratorState::PACKED_LEN].copy_from_slice(&next.pack());
            let phi21_sq = f.phi_nodes[0][(1, 0)].powi(2) + f.phi_nodes[1][(1, 0)].powi(2);
            x1[l.int_phi21_sq(i)] = x0[l.int_phi21_sq(i)] + 0.5 * h * phi21_sq;
            x1[l.int_u3(i)] = x0[l.int_u3(i)] + 0.5 * h * (f.u3[0] + f.u3[1]);
        }

        let [n1, n2] = &nodes;
        x1[l.diag + 2] = x0[l.diag + 2] + 0.5 * h * (n1.delta.powi(2) + n2.delta.powi(2));
        x1[l.diag + 3] = x0[l.diag + 3] + 0.5 * h * ((n1.alpha * n1.delta).abs() + (n2.alpha * n2.delta).abs());
        Ok(())
    }

    /// Transition maps of one generator over the step. The steering `u3`
    /// at each node comes from a frozen-coefficient prediction of `Phi`.
    fn generator_flow(&self, t: f64, h: f64, phi0: &Matrix2<f64>, nodes: &[Node; 2]) -> GeneratorFlow {
        let u3_of = |phi: &Matrix2<f64>| pump_damp_signals(phi, 0.0, t, &self.cfg.pump).u3;
        let a_of = |w: f64, u3: f64| Matrix2::new(0.0, -w, w, u3);
        // (xi1, xi2, z) block; the forcing enters through phi1
        let b_of = |w: f64, u3: f64| Matrix3::new(0.0, -w, w, w, u3, 0.0, 0.0, 0.0, u3);
        let u0 = u3_of(phi0);
        let mut u3 = [0.0; 2];
        let mut a = [Matrix2::zeros(); 2];
        let mut bm = [Matrix3::zeros(); 2];
        let mut phi_nodes = [Matrix2::zeros(); 2];
        let mut node_maps = [(Matrix3::zeros(), Matrix3::zeros()); 2];
        for k in 0..2 {
            let w = nodes[k].alpha * nodes[k].delta;
            let c = GAUSS_NODES[k] * h;
            u3[k] = u3_of(&(expm2(&(a_of(w, u0) * c)) * phi0));
            a[k] = a_of(w, u3[k]);
            bm[k] = b_of(w, u3[k]);
            phi_nodes[k] = expm2(&(a[k] * c)) * phi0;
            node_maps[k] = exp_phi1_3(&(bm[k] * c));
        }
        GeneratorFlow {
            phi0: *phi0,
            u3,
            phi_nodes,
            node_maps,
            phi1: expm2(&((a[0] + a[1]) * (0.5 * h))) * phi0,
            step_map: exp_phi1_3(&((bm[0] + bm[1]) * (0.5 * h))),
        }
    }

    /// Stored energy under the true parameters.
    pub fn energy(&self, state: &ElState<2>) -> f64 {
        self.arm.energy(state, self.theta5())
    }

    /// `Vdot + s' K1 s` for `V = 1/2 s' M(q) s` with the true inertia.
    pub fn lyapunov_residual(&self, s: &Signals) -> Option<f64> {
        let r = s.reference?;
        let e = tracking_errors(&s.state, &r, &self.gains);
        let th = self.theta5();
        let m = self.arm.inertia_matrix(&s.state.q, th);
        let mdot = (0..self.arm.inertia_params()).fold(Matrix2::zeros(), |acc, i| {
            (0..2).fold(acc, |acc, k| acc + self.arm.inertia_basis_partial(i, k, &s.state.q) * (th[i] * s.state.qd[k]))
        });
        let sdot = s.qdd - e.qdd_r;
        let vdot = e.s.dot(&(m * sdot)) + 0.5 * e.s.dot(&(mdot * e.s));
        Some(vdot + e.s.dot(&self.gains.k1.component_mul(&e.s)))
    }

    pub fn work(&self, x: &[f64]) -> f64 {
        x[self.layout.diag]
    }

    pub fn dissipated(&self, x: &[f64]) -> f64 {
        x[self.layout.diag + 1]
    }

    pub fn int_delta_sq(&self, x: &[f64]) -> f64 {
        x[self.layout.diag + 2]
    }

    pub fn int_abs_alpha_delta(&self, x: &[f64]) -> f64 {
        x[self.layout.diag + 3]
    }

    pub fn int_phi21_sq(&self, x: &[f64], i: usize) -> f64 {
        x[self.layout.int_phi21_sq(i)]
    }

    pub fn int_u3(&self, x: &[f64], i: usize) -> f64 {
        x[self.layout.int_u3(i)]
    }
}

impl OdeSystem for CoupledSystem {
    fn dim(&self) -> usize {
        self.layout.len
    }

    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.fill_derivative(t, x, dx).map_err(|e| match e {
            Error::SingularInertia { .. } if x.iter().any(|v| !v.is_finite()) => Error::NonFinite { t },
            other => other,
        })
    }

    fn begin_step(&mut self, t0: f64, t1: f64) {
        self.pulse_on = Some(0.5 * (t0 + t1) < PULSE_END);
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.cfg.input {
            InputKind::TauB => vec![PULSE_END],
            _ => Vec::new(),
        }
    }

    fn advance(&mut self, rk: &mut Rk4, t: f64, x: &mut [f64], h: f64) -> Result<()> {
        let x0 = x.to_vec();
        rk.step(self, t, x, h)?;
        let f0 = rk.first_stage().to_vec();
        let mut f1 = vec![0.0; x.len()];
        self.derivative(t + h, x, &mut f1)?;
        self.propagate(t, h, &x0, &f0, x, &f1)
    }
}

/// Upstream signals at one quadrature node.
#[derive(Debug, Clone)]
struct Node {
    y: DVector<f64>,
    regressor: DMatrix<f64>,
    mixed: DVector<f64>,
    delta: f64,
    alpha: f64,
}

/// Step maps shared by every generator that starts from the same `Phi`.
#[derive(Debug, Clone)]
struct GeneratorFlow {
    phi0: Matrix2<f64>,
    u3: [f64; 2],
    phi_nodes: [Matrix2<f64>; 2],
    /// `(exp, phi1)` from the step start to each node.
    node_maps: [(Matrix3<f64>, Matrix3<f64>); 2],
    phi1: Matrix2<f64>,
    step_map: (Matrix3<f64>, Matrix3<f64>),
}

fn exp_phi1_3(m: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let (e, p) = exp_phi1(&DMatrix::from_column_slice(3, 3, m.as_slice()));
    (Matrix3::from_column_slice(e.as_slice()), Matrix3::from_column_slice(p.as_slice()))
}
