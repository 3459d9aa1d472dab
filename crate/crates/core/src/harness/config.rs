//! Scenario configuration and the built-in catalog.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector2;
use serde::Deserialize;

use crate::el_model::RobotGeometry;
use crate::error::{Error, Result};
use crate::lre_gen::{PumpDampConfig, Steering};

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($(#[$vmeta:meta])* $variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($(#[$vmeta])* $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::Unknown { kind: $kind, name: s.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(
    /// Plant excitation: an open-loop torque profile or a closed loop.
    InputKind, "input" {
        TauA => "tau_a",
        TauB => "tau_b",
        TauC => "tau_c",
        Regulation => "closed_loop_regulation",
        Tracking => "closed_loop_tracking",
    }
);

named_enum!(
    Parameterization, "parameterization" {
        PowerBalance => "power_balance",
        Classical => "classical",
    }
);

named_enum!(
    /// Which estimate is reported and, in closed loop, fed to the controller.
    EstimatorChain, "estimator" {
        Gradient => "gradient",
        Drem => "drem",
        DremNewLre => "drem_newlre",
        Known => "known",
    }
);

named_enum!(
    /// Initial state of the power-balance regressor filter.
    LreInit, "lre_init" {
        /// `z(0) = -omega(x(0))`, so the regression holds from `t = 0`.
        Matched => "matched",
        /// `z(0) = 0`; the initial energy leaves an `e^{-lambda t}` offset.
        Zero => "zero",
    }
);

impl InputKind {
    pub fn is_closed_loop(&self) -> bool {
        matches!(self, InputKind::Regulation | InputKind::Tracking)
    }
}

/// End of the `tau_b` pulse, s.
pub const PULSE_END: f64 = 2.0;

/// Open-loop torque profiles. `tau_b` is `col(1, 3)` on `[0, 2]` s.
pub fn input_signal(kind: InputKind, t: f64) -> Result<Vector2<f64>> {
    match kind {
        InputKind::TauA => Ok(Vector2::new((-0.4 * t).exp(), (-0.5 * t).exp())),
        InputKind::TauB => Ok(pulse(t <= PULSE_END)),
        InputKind::TauC => Ok(Vector2::new(1.0, 3.0) * ((4.0 * t).cos() / (2.0 + t))),
        InputKind::Regulation | InputKind::Tracking => Err(Error::config(
            "input",
            format!("`{kind}` is a closed loop; its torque comes from the controller"),
        )),
    }
}

pub(crate) fn pulse(on: bool) -> Vector2<f64> {
    if on {
        Vector2::new(1.0, 3.0)
    } else {
        Vector2::zeros()
    }
}

/// A complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub geometry: RobotGeometry,
    pub input: InputKind,
    pub parameterization: Parameterization,
    pub estimator: EstimatorChain,
    /// Vector gradient gain, `Gamma = gamma I`.
    pub gamma: f64,
    /// Scalar DREM / new-regression gain.
    pub gamma_i: f64,
    pub drem_normalized: bool,
    pub lambda: f64,
    pub lambda_e: f64,
    pub pump: PumpDampConfig,
    pub k1: f64,
    pub k2: f64,
    pub dt: f64,
    pub horizon: f64,
    pub sample_interval: f64,
    pub q0: Vector2<f64>,
    pub qd0: Vector2<f64>,
    pub theta_hat0: f64,
    /// Diagonal viscous friction of the plant.
    pub friction: Option<Vector2<f64>>,
    /// Append friction columns to the regression.
    pub estimate_friction: bool,
    pub lre_init: LreInit,
    /// Abort when the certainty-equivalent inertia is not positive definite.
    pub require_pd_estimate: bool,
    pub output: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            geometry: RobotGeometry::reference(),
            input: InputKind::TauB,
            parameterization: Parameterization::Classical,
            estimator: EstimatorChain::DremNewLre,
            gamma: 25.0,
            gamma_i: 25.0,
            drem_normalized: false,
            lambda: 1.0,
            lambda_e: 1.0,
            pump: PumpDampConfig { beta: 0.25, alpha: Steering::Sine { amplitude: 1.0, frequency: 0.2 }, epsilon: 1e-3 },
            k1: 7.0,
            k2: 4.0,
            dt: 1e-3,
            horizon: 40.0,
            sample_interval: 0.01,
            q0: Vector2::new(0.6 * PI, 0.7 * PI),
            qd0: Vector2::zeros(),
            theta_hat0: 0.0,
            friction: None,
            estimate_friction: false,
            lre_init: LreInit::Matched,
            require_pd_estimate: false,
            output: None,
        }
    }
}

impl ScenarioConfig {
    /// Defaults for an input / parameterization / estimator cell: open-loop
    /// runs use gains 25 (classical) or 100 (power balance) over 40 s;
    /// closed loops use `K1 = 7`, `K2 = 4`, `Gamma = 25` and `gamma_i` 10
    /// (regulation) or 25 (tracking) over 60 s.
    pub fn for_cell(input: InputKind, parameterization: Parameterization, estimator: EstimatorChain) -> Self {
        let mut cfg = Self { input, parameterization, estimator, ..Self::default() };
        cfg.name = format!("{input}-{parameterization}-{estimator}");
        match input {
            InputKind::Regulation => {
                cfg.horizon = 60.0;
                cfg.gamma = 25.0;
                cfg.gamma_i = 10.0;
            }
            InputKind::Tracking => {
                cfg.horizon = 60.0;
                cfg.gamma = 25.0;
                cfg.gamma_i = 25.0;
            }
            _ => {
                cfg.horizon = 40.0;
                let g = match parameterization {
                    Parameterization::Classical => 25.0,
                    Parameterization::PowerBalance => 100.0,
                };
                cfg.gamma = g;
                cfg.gamma_i = g;
            }
        }
        cfg
    }

    /// Number of estimated parameters (five, plus two with friction).
    pub fn param_count(&self) -> usize {
        5 + if self.estimate_friction { 2 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| Error::config("geometry", e.to_string()))?;
        let positive = [
            ("gamma", self.gamma),
            ("gamma_i", self.gamma_i),
            ("lambda", self.lambda),
            ("lambda_e", self.lambda_e),
            ("k1", self.k1),
            ("k2", self.k2),
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("sample_interval", self.sample_interval),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive and finite, got {v}")));
            }
        }
        if self.sample_interval < self.dt {
            return Err(Error::config("sample_interval", "must not be shorter than dt"));
        }
        if self.dt > self.horizon {
            return Err(Error::config("dt", "must not exceed the horizon"));
        }
        self.pump.validate()?;
        if self.q0.iter().chain(self.qd0.iter()).any(|v| !v.is_finite()) || !self.theta_hat0.is_finite() {
            return Err(Error::config("q0/qd0/theta_hat0", "initial conditions must be finite"));
        }
        if let Some(r) = self.friction {
            if r.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::config("friction", "coefficients must be non-negative"));
            }
        }
        if self.estimator == EstimatorChain::Known && !self.input.is_closed_loop() {
            return Err(Error::config("estimator", "`known` only applies to closed loops"));
        }
        Ok(())
    }

    /// Applies the fields present in `ov` on top of `self`.
    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = ov.$field { self.$field = v; } )* };
        }
        set!(gamma, gamma_i, drem_normalized, lambda, lambda_e, k1, k2, dt, horizon, sample_interval,
             theta_hat0, estimate_friction, require_pd_estimate);
        if let Some(s) = &ov.input {
            self.input = s.parse()?;
        }
        if let Some(s) = &ov.parameterization {
            self.parameterization = s.parse()?;
        }
        if let Some(s) = &ov.estimator {
            self.estimator = s.parse()?;
        }
        if let Some(s) = &ov.lre_init {
            self.lre_init = s.parse()?;
        }
        if let Some(v) = ov.beta {
            self.pump.beta = v;
        }
        if let Some(v) = ov.epsilon {
            self.pump.epsilon = v;
        }
        if ov.alpha_amplitude.is_some() || ov.alpha_frequency.is_some() {
            let (a0, f0) = match self.pump.alpha {
                Steering::Sine { amplitude, frequency } => (amplitude, frequency),
                Steering::Constant(a) => (a, 0.0),
                Steering::Off => (0.0, 0.0),
            };
            let amplitude = ov.alpha_amplitude.unwrap_or(a0);
            let frequency = ov.alpha_frequency.unwrap_or(f0);
            self.pump.alpha = if frequency == 0.0 {
                Steering::Constant(amplitude)
            } else {
                Steering::Sine { amplitude, frequency }
            };
        }
        if let Some(v) = ov.l1 {
            self.geometry.l1 = v;
        }
        if let Some(v) = ov.l2 {
            self.geometry.l2 = v;
        }
        if let Some(v) = ov.m1 {
            self.geometry.m1 = v;
        }
        if let Some(v) = ov.m2 {
            self.geometry.m2 = v;
        }
        if let Some(v) = ov.g {
            self.geometry.g = v;
        }
        if let Some(v) = ov.q0 {
            self.q0 = Vector2::from(v);
        }
        if let Some(v) = ov.qd0 {
            self.qd0 = Vector2::from(v);
        }
        if let Some(v) = ov.friction {
            self.friction = Some(Vector2::from(v));
        }
        if let Some(p) = &ov.output {
            self.output = Some(p.clone());
        }
        Ok(())
    }
}

/// Flat key-value fields of one scenario section in a config file.
/// Absent keys keep the base scenario's value.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Catalog scenario to start from.
    pub base: Option<String>,
    pub input: Option<String>,
    pub parameterization: Option<String>,
    pub estimator: Option<String>,
    pub gamma: Option<f64>,
    pub gamma_i: Option<f64>,
    pub drem_normalized: Option<bool>,
    pub lambda: Option<f64>,
    pub lambda_e: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_amplitude: Option<f64>,
    pub alpha_frequency: Option<f64>,
    pub epsilon: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub sample_interval: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub g: Option<f64>,
    pub q0: Option<[f64; 2]>,
    pub qd0: Option<[f64; 2]>,
    pub theta_hat0: Option<f64>,
    pub friction: Option<[f64; 2]>,
    pub estimate_friction: Option<bool>,
    pub lre_init: Option<String>,
    pub require_pd_estimate: Option<bool>,
    pub output: Option<PathBuf>,
}

/// Parses a config file: one TOML table per scenario, keyed by name.
pub fn parse_config(text: &str) -> Result<Vec<ScenarioConfig>> {
    let sections: BTreeMap<String, Overrides> = toml::from_str(text)?;
    if sections.is_empty() {
        return Err(Error::config("<file>", "no scenario sections found"));
    }
    sections
        .into_iter()
        .map(|(name, ov)| {
            let mut cfg = match &ov.base {
                Some(base) => catalog_entry(base)?,
                None => ScenarioConfig::default(),
            };
            cfg.name = name;
            cfg.apply(&ov)?;
            cfg.validate().map_err(|e| match e {
                Error::InvalidConfig { field, message } => {
                    Error::InvalidConfig { field: format!("{}.{}", cfg.name, field), message }
                }
                other => other,
            })?;
            Ok(cfg)
        })
        .collect()
}

pub fn load_config(path: &Path) -> Result<Vec<ScenarioConfig>> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// The built-in scenarios reproducing the reference experiments.
///
/// Open loop (40 s): every input with the classical regression under the
/// plain gradient and DREM + new regression (gains 25), and with the
/// power-balance regression under DREM alone and DREM + new regression
/// (gains 100). Closed loop (60 s): regulation and tracking, each with the
/// classical gradient and the power-balance DREM + new regression, plus a
/// known-parameter regulation baseline.
pub fn catalog() -> Vec<ScenarioConfig> {
    use EstimatorChain::*;
    use InputKind::*;
    use Parameterization::*;
    let mut out = Vec::new();
    for input in [TauA, TauB, TauC] {
        for (p, e) in [(Classical, Gradient), (Classical, DremNewLre), (PowerBalance, Drem), (PowerBalance, DremNewLre)] {
            out.push(ScenarioConfig::for_cell(input, p, e));
        }
    }
    for input in [Regulation, Tracking] {
        for p in [Classical, PowerBalance] {
            for e in [Gradient, DremNewLre] {
                out.push(ScenarioConfig::for_cell(input, p, e));
            }
        }
    }
    out.push(ScenarioConfig::for_cell(Regulation, Classical, Known));
    out
}

pub fn catalog_entry(name: &str) -> Result<ScenarioConfig> {
    catalog()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Unknown { kind: "scenario", name: name.to_string() })
}
