//! Running a scenario: integration, sampling and summary statistics.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::control::inertia_positive_definite;
use crate::error::{Error, Result};
use crate::lre_gen::{check_excitation_floor, ExcitationReport};

use super::config::ScenarioConfig;
use super::integrator::integrate;
use super::pipeline::CoupledSystem;
use super::record::{write_csv, Sample, SCHEMA_VERSION};

/// Start of the window over which the regression identities are measured, s.
pub const TRANSIENT_WINDOW: f64 = 5.0;

/// Fraction of the horizon, from the end, used for the excitation growth test.
pub const EXCITATION_WINDOW: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub schema_version: u32,
    pub steps: usize,
    pub samples: usize,
    pub wall_clock_s: f64,
    pub theta: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// `|theta_hat_i - theta_i| / |theta_i|` at the horizon for each estimator.
    pub rel_err_selected: Vec<f64>,
    pub rel_err_gradient: Vec<f64>,
    pub rel_err_drem: Vec<f64>,
    pub rel_err_newlre: Vec<f64>,
    pub q_err_final: Option<f64>,
    /// `max |y - Psi theta| / max |y|` after the transient window.
    pub lre_identity: f64,
    /// Per channel `max |Ymix_i - Delta theta_i| / (max |Delta| |theta_i|)`.
    pub mixing_identity: Vec<f64>,
    /// Per channel `max |Y - Phi_21 theta_i| / max |Phi_21 theta_i|`.
    pub new_lre_identity: Vec<f64>,
    /// `max |det Phi - exp(int u3)| / exp(int u3)` over all channels.
    pub liouville: f64,
    /// `max |E(t) - E(0) - W(t) + D(t)| / max |E|`.
    pub energy_balance: f64,
    /// `max |adj(Psi) Psi - det(Psi) I| / |Psi|^q` on sampled instants.
    pub cayley: f64,
    pub delta_peak: f64,
    pub delta_final: f64,
    pub int_delta_sq: f64,
    pub int_abs_alpha_delta: f64,
    pub excitation: Vec<ExcitationReport>,
    /// Fraction of steps with an indefinite certainty-equivalent inertia.
    pub mhat_indefinite_fraction: Option<f64>,
    pub lyapunov_residual: Option<f64>,
}

pub(crate) fn rel_err(est: &[f64], theta: &[f64]) -> Vec<f64> {
    est.iter()
        .zip(theta)
        .map(|(e, t)| if *t == 0.0 { (e - t).abs() } else { ((e - t) / t).abs() })
        .collect()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.name)?;
        writeln!(
            f,
            "  steps {}  samples {}  wall clock {:.3} s",
            self.steps, self.samples, self.wall_clock_s
        )?;
        writeln!(f, "  |theta~|/|theta| selected  {}", fmt_vec(&self.rel_err_selected))?;
        writeln!(f, "                   gradient  {}", fmt_vec(&self.rel_err_gradient))?;
        writeln!(f, "                   drem      {}", fmt_vec(&self.rel_err_drem))?;
        writeln!(f, "                   new lre   {}", fmt_vec(&self.rel_err_newlre))?;
        if let Some(e) = self.q_err_final {
            writeln!(f, "  |q~(T)| {e:.3e} rad")?;
        }
        writeln!(
            f,
            "  Delta peak {:.3e}  final {:.3e}  int Delta^2 {:.3e}  int |alpha Delta| {:.3e}",
            self.delta_peak, self.delta_final, self.int_delta_sq, self.int_abs_alpha_delta
        )?;
        let slopes: Vec<f64> = self.excitation.iter().map(|r| r.final_slope).collect();
        writeln!(f, "  final mean Phi21^2 per channel  {}", fmt_vec(&slopes))?;
        writeln!(
            f,
            "  identities: lre {:.1e}  mixing {:.1e}  new lre {:.1e}  liouville {:.1e}  energy {:.1e}",
            self.lre_identity,
            self.mixing_identity.iter().copied().fold(0.0, f64::max),
            self.new_lre_identity.iter().copied().fold(0.0, f64::max),
            self.liouville,
            self.energy_balance
        )?;
        if let Some(frac) = self.mhat_indefinite_fraction {
            writeln!(f, "  indefinite inertia estimate on {:.1}% of steps", 100.0 * frac)?;
        }
        Ok(())
    }
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: ScenarioConfig,
    pub samples: Vec<Sample>,
    pub summary: Summary,
}

#[derive(Default)]
struct Extremes {
    lre_res: f64,
    y_max: f64,
    mix_res: Vec<f64>,
    delta_max: f64,
    new_res: Vec<f64>,
    new_max: Vec<f64>,
    liouville: f64,
    energy_res: f64,
    energy_max: f64,
    cayley: f64,
    indefinite: usize,
    lyapunov: Option<f64>,
}

fn cayley_residual(psi: &nalgebra::DMatrix<f64>) -> f64 {
    let (adj, det) = crate::drem::adjugate_and_det(psi);
    let n = psi.nrows();
    let scale = psi.amax().powi(n as i32);
    if scale == 0.0 {
        return 0.0;
    }
    let lhs = adj * psi;
    (lhs - nalgebra::DMatrix::identity(n, n) * det).amax() / scale
}

/// Integrates `cfg` and collects the sampled series and its summary.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Run> {
    let started = Instant::now();
    let mut sys = CoupledSystem::new(cfg)?;
    let mut x = sys.initial_state()?;
    let p = sys.layout.params;
    let theta: Vec<f64> = sys.theta.iter().copied().collect();
    let every = ((cfg.sample_interval / cfg.dt).round() as usize).max(1);
    let total_steps = ((cfg.horizon / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let closed = cfg.input.is_closed_loop();

    let mut ex = Extremes { mix_res: vec![0.0; p], new_res: vec![0.0; p], new_max: vec![0.0; p], ..Default::default() };
    let mut samples = Vec::with_capacity(total_steps / every + 2);
    let observer_sys = sys.unlatched();
    let mut energy0 = None;

    let steps = integrate(&mut sys, &mut x, 0.0, cfg.horizon, cfg.dt, |k, t, x| {
        let sys = &observer_sys;
        let s = sys.signals(t, x)?;
        let energy = sys.energy(&s.state);
        let e0 = *energy0.get_or_insert(energy);
        let work = sys.work(x);
        let dissipated = sys.dissipated(x);
        ex.energy_res = ex.energy_res.max((energy - e0 - work + dissipated).abs());
        ex.energy_max = ex.energy_max.max(energy.abs());

        let res = &s.y - &s.regressor * &sys.theta;
        let lre_residual = res.amax();
        if t >= TRANSIENT_WINDOW.min(0.5 * cfg.horizon) - 1e-12 {
            ex.lre_res = ex.lre_res.max(lre_residual);
            ex.y_max = ex.y_max.max(s.y.amax());
        }
        ex.delta_max = ex.delta_max.max(s.delta.abs());
        let mix_residual: Vec<f64> = (0..p).map(|i| s.mixed[i] - s.delta * theta[i]).collect();
        let mut det_phi = Vec::with_capacity(p);
        let mut int_u3 = Vec::with_capacity(p);
        for i in 0..p {
            ex.mix_res[i] = ex.mix_res[i].max(mix_residual[i].abs());
            let out = s.new_lre[i];
            ex.new_res[i] = ex.new_res[i].max((out.y - out.phi21 * theta[i]).abs());
            ex.new_max[i] = ex.new_max[i].max((out.phi21 * theta[i]).abs());
            let d = s.generators[i].phi.determinant();
            let iu = sys.int_u3(x, i);
            ex.liouville = ex.liouville.max(((d - iu.exp()) / iu.exp()).abs());
            det_phi.push(d);
            int_u3.push(iu);
        }

        let (q_err, lyap, pd) = match &s.reference {
            Some(r) => {
                let pd = inertia_positive_definite(&sys.arm, &s.state.q, &s.theta_used.as_slice()[..5]);
                if !pd {
                    ex.indefinite += 1;
                    if cfg.require_pd_estimate {
                        return Err(Error::IndefiniteEstimate { t });
                    }
                }
                let lyap = sys.lyapunov_residual(&s);
                if let Some(v) = lyap {
                    ex.lyapunov = Some(ex.lyapunov.unwrap_or(0.0).max(v.abs()));
                }
                let e = s.state.q - r.q;
                (Some([e[0], e[1]]), lyap, Some(pd))
            }
            None => (None, None, None),
        };

        if k % every == 0 || k == total_steps {
            ex.cayley = ex.cayley.max(cayley_residual(&s.drem.psi));
            let theta_hat: Vec<f64> = s.theta_used.iter().copied().collect();
            samples.push(Sample {
                t,
                q: [s.state.q[0], s.state.q[1]],
                qd: [s.state.qd[0], s.state.qd[1]],
                tau: [s.tau[0], s.tau[1]],
                y: s.y.iter().copied().collect(),
                lre_residual,
                delta: s.delta,
                mixed: s.mixed.iter().copied().collect(),
                mix_residual,
                y_new: s.new_lre.iter().map(|o| o.y).collect(),
                phi11: s.generators.iter().map(|g| g.phi[(0, 0)]).collect(),
                phi21: s.new_lre.iter().map(|o| o.phi21).collect(),
                det_phi,
                int_u3,
                theta_err: theta_hat.iter().zip(&theta).map(|(a, b)| a - b).collect(),
                theta_hat,
                theta_grad: s.theta_grad.iter().copied().collect(),
                theta_drem: s.theta_drem.iter().copied().collect(),
                theta_newlre: s.theta_newlre.iter().copied().collect(),
                energy,
                work,
                dissipated,
                int_delta_sq: sys.int_delta_sq(x),
                int_abs_alpha_delta: sys.int_abs_alpha_delta(x),
                int_phi21_sq: (0..p).map(|i| sys.int_phi21_sq(x, i)).collect(),
                q_err,
                lyapunov_residual: lyap,
                mhat_pd: pd,
            });
        }
        Ok(())
    })?;

    let last = samples.last().expect("at least the initial sample is recorded");
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let excitation = (0..p)
        .map(|i| {
            let phi11: Vec<f64> = samples.iter().map(|s| s.phi11[i]).collect();
            let phi21: Vec<f64> = samples.iter().map(|s| s.phi21[i]).collect();
            check_excitation_floor(&times, &phi11, &phi21, &cfg.pump, EXCITATION_WINDOW)
        })
        .collect();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    let summary = Summary {
        name: cfg.name.clone(),
        schema_version: SCHEMA_VERSION,
        steps,
        samples: samples.len(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        rel_err_selected: rel_err(&last.theta_hat, &theta),
        rel_err_gradient: rel_err(&last.theta_grad, &theta),
        rel_err_drem: rel_err(&last.theta_drem, &theta),
        rel_err_newlre: rel_err(&last.theta_newlre, &theta),
        theta_hat: last.theta_hat.clone(),
        q_err_final: last.q_err.map(|e| e[0].hypot(e[1])),
        lre_identity: ratio(ex.lre_res, ex.y_max),
        mixing_identity: (0..p).map(|i| ratio(ex.mix_res[i], ex.delta_max * theta[i].abs())).collect(),
        new_lre_identity: (0..p).map(|i| ratio(ex.new_res[i], ex.new_max[i])).collect(),
        liouville: ex.liouville,
        energy_balance: ratio(ex.energy_res, ex.energy_max),
        cayley: ex.cayley,
        delta_peak: ex.delta_max,
        delta_final: last.delta,
        int_delta_sq: last.int_delta_sq,
        int_abs_alpha_delta: last.int_abs_alpha_delta,
        excitation,
        mhat_indefinite_fraction: closed.then(|| ex.indefinite as f64 / (steps + 1) as f64),
        lyapunov_residual: ex.lyapunov,
        theta,
    };
    Ok(Run { config: cfg.clone(), samples, summary })
}

/// Output path: the configured one, else `<dir>/<name>.csv`.
pub fn output_path(cfg: &ScenarioConfig, dir: &Path) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| dir.join(format!("{}.csv", cfg.name)))
}

/// Simulates `cfg` and writes its CSV, returning the run.
pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<Run> {
    let run = simulate(cfg)?;
    let path = output_path(cfg, dir);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_csv(BufWriter::new(File::create(&path)?), run.summary.theta.len(), &run.samples)?;
    Ok(run)
}
