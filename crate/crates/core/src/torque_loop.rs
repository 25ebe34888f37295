//! Per-tick control pipeline and the optional PI loop around the linearized
//! torque channel.
//!
//! One tick runs, in order: Park-Clarke on the measured phase currents, torque
//! estimate and PI update, clamping of the torque command to the band the
//! voltage limit allows, costate estimate, optimal `z`, the linearizing voltage
//! map and the inverse Park-Clarke transform.

use crate::error::{Error, Result};
use crate::linearize::{compute_terms, linearize};
use crate::machine::{
    h_vector, inverse_park_clarke, park_clarke, torque, AbcTriple, DqState, DqVoltage, MachineParams,
};
use crate::optimizer::{
    clamp_torque_command, costate_matrices, estimate_costate, fallback_costate, lookahead_step, optimal_z, projection,
    z_limit, Costate, SaturationReport,
};
use crate::Vec2;

/// PI gains and integrator state. `u = tau_ref + kp e + ki * integral(e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub kp: f64,
    /// 1/s
    pub ki: f64,
    /// Integral of the torque error (N m s).
    pub integral: f64,
}

impl PiGains {
    pub fn new(kp: f64, ki: f64) -> Self {
        PiGains { kp, ki, integral: 0.0 }
    }

    /// Pure feedforward: `u = tau_ref`.
    pub fn open_loop() -> Self {
        PiGains::new(0.0, 0.0)
    }

    /// `u` and the integrator value it was computed with, without committing it.
    fn propose(&self, tau_ref: f64, tau_est: f64, dt: f64) -> (f64, f64) {
        let e = tau_ref - tau_est;
        let integral = self.integral + e * dt;
        (tau_ref + self.kp * e + self.ki * integral, integral)
    }
}

impl Default for PiGains {
    fn default() -> Self {
        PiGains::new(5.0, 500.0)
    }
}

/// One PI step with unconditional integration.
pub fn pi_update(tau_ref: f64, tau_est: f64, gains: &mut PiGains, dt: f64) -> f64 {
    let (u, integral) = gains.propose(tau_ref, tau_est, dt);
    gains.integral = integral;
    u
}

/// How `z` is placed on the admissible segment each tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZStep {
    /// Point on the segment chosen by a one-step lookahead of `|i|^2`, capped
    /// by the voltage budget. Avoids tick-to-tick switching of `z` under
    /// sampled control.
    #[default]
    Lookahead,
    /// Always spend the whole voltage budget (`|z| = z_max`).
    FullBudget,
}

/// Whether the copper-loss channel is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZChannel {
    /// Pontryagin-optimal `z`.
    Optimal,
    /// `z = 0`: plain feedback linearization.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub params: MachineParams,
    /// Voltage magnitude limit (V).
    pub v_max: f64,
    /// Control period (s).
    pub dt: f64,
    /// Costate horizon (s).
    pub horizon: f64,
    pub gains: PiGains,
    /// Fraction of the available voltage budget given to `z`, in (0, 1].
    pub alpha_z: f64,
    pub z_channel: ZChannel,
    pub z_step: ZStep,
}

impl ControllerConfig {
    pub fn new(params: MachineParams) -> Self {
        let dt = 1e-4;
        ControllerConfig {
            params,
            v_max: 48.0,
            dt,
            horizon: 10.0 * dt,
            gains: PiGains::default(),
            alpha_z: 1.0,
            z_channel: ZChannel::Optimal,
            z_step: ZStep::Lookahead,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(name, format!("must be finite and > 0, got {x}")))
            }
        };
        positive("v_max", self.v_max)?;
        positive("dt_ctrl", self.dt)?;
        positive("horizon", self.horizon)?;
        if !(self.gains.kp >= 0.0 && self.gains.kp.is_finite()) {
            return Err(Error::validation("kp", "must be finite and >= 0"));
        }
        if !(self.gains.ki >= 0.0 && self.gains.ki.is_finite()) {
            return Err(Error::validation("ki", "must be finite and >= 0"));
        }
        if !(self.alpha_z > 0.0 && self.alpha_z <= 1.0) {
            return Err(Error::validation("alpha_z", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Sensor readings for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensors {
    /// Mechanical rotor angle (rad).
    pub theta: f64,
    /// Electrical speed (rad/s).
    pub omega: f64,
    pub i_abc: AbcTriple,
}

/// Everything one control tick saw and produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlFrame {
    pub t: f64,
    pub theta: f64,
    pub omega: f64,
    pub i_abc: AbcTriple,
    pub i_dq: DqState,
    pub tau_ref: f64,
    pub tau_est: f64,
    pub u_raw: f64,
    pub u_feasible: f64,
    /// Torque-channel direction used this tick (zero when degenerate).
    pub b: Vec2,
    /// Voltage budget handed to the `z` stage.
    pub z_max: f64,
    pub lambda: Vec2,
    pub z: Vec2,
    pub v_dq: DqVoltage,
    pub v_abc: AbcTriple,
    pub report: SaturationReport,
    /// `(3/2) R |i|^2` (W).
    pub p_copper: f64,
}

/// Stateful optimal feedback-linearization controller.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    pi: PiGains,
    held: DqVoltage,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Controller {
            pi: config.gains,
            config,
            held: DqVoltage::ZERO,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn integrator(&self) -> f64 {
        self.pi.integral
    }

    pub fn control_step(&mut self, t: f64, sensors: Sensors, tau_ref: f64) -> Result<ControlFrame> {
        let cfg = &self.config;
        let params = &cfg.params;
        if !(sensors.theta.is_finite() && sensors.omega.is_finite() && tau_ref.is_finite()) {
            return Err(Error::NonFinite {
                what: "controller input",
                t,
            });
        }
        let omega = sensors.omega;

        let i = park_clarke(sensors.theta, sensors.i_abc, params);
        if !i.is_finite() {
            return Err(Error::NonFinite {
                what: "measured current",
                t,
            });
        }
        let tau_est = torque(i, params);
        let (u_raw, integral) = self.pi.propose(tau_ref, tau_est, cfg.dt);

        let mut frame = ControlFrame {
            t,
            theta: sensors.theta,
            omega,
            i_abc: sensors.i_abc,
            i_dq: i,
            tau_ref,
            tau_est,
            u_raw,
            u_feasible: u_raw,
            b: Vec2::zeros(),
            z_max: 0.0,
            lambda: Vec2::zeros(),
            z: Vec2::zeros(),
            v_dq: self.held,
            v_abc: AbcTriple::default(),
            report: SaturationReport {
                u_original: u_raw,
                ..SaturationReport::default()
            },
            p_copper: params.copper_loss(i),
        };

        let terms = match compute_terms(i, omega, params) {
            Ok(terms) => terms,
            Err(Error::DegenerateB { .. }) => {
                frame.report.b_degenerate = true;
                frame.report.z_zeroed = true;
                frame.v_abc = inverse_park_clarke(sensors.theta, self.held, params);
                return Ok(frame);
            }
            Err(e) => return Err(e),
        };
        if !(terms.phi.is_finite() && terms.b_norm_sq.is_finite()) {
            return Err(Error::NonFinite {
                what: "linearization terms",
                t,
            });
        }
        frame.b = terms.b;

        let (u, mut report) = clamp_torque_command(u_raw, &terms, cfg.v_max);
        if !report.u_clamped {
            self.pi.integral = integral;
        }
        let z_max = z_limit(u, &terms, cfg.v_max)?;

        let (costate, z) = match cfg.z_channel {
            ZChannel::Off => (Costate::default(), Vec2::zeros()),
            ZChannel::Optimal => {
                let m = costate_matrices(i, omega, u, &terms, params)?;
                let costate = match estimate_costate(i, &m.a, cfg.horizon) {
                    Ok(c) => c,
                    Err(Error::IllConditioned { .. }) => {
                        report.ill_conditioned = true;
                        fallback_costate(i, cfg.horizon)
                    }
                    Err(e) => return Err(e),
                };
                let b_proj = projection(terms.b)?;
                let budget = if report.u_clamped { 0.0 } else { cfg.alpha_z * z_max };
                let l_inv = params.inductance_inv();
                let (mut z, zr) = optimal_z(&costate, &b_proj, &l_inv, budget);
                report.z_at_limit = zr.z_at_limit;
                report.z_zeroed = zr.z_zeroed;
                if cfg.z_step == ZStep::Lookahead && budget > 0.0 {
                    let direction = if zr.z_at_limit {
                        z / budget
                    } else {
                        Vec2::new(-terms.b[1], terms.b[0]) / terms.b_norm()
                    };
                    let drift = terms.torque_direction() * (u - terms.phi) + h_vector(i, omega, params);
                    let s = lookahead_step(i, direction, drift, &l_inv, cfg.dt, budget);
                    z = direction * s;
                    report.z_at_limit = s.abs() == budget;
                    report.z_zeroed = s == 0.0;
                }
                frame.z_max = budget;
                (costate, z)
            }
        };

        let mut v = linearize(u, z, &terms)?;
        if !(v.v_d.is_finite() && v.v_q.is_finite()) {
            return Err(Error::NonFinite {
                what: "voltage command",
                t,
            });
        }
        // band-edge rounding can leave |v| a few ulps past the limit
        if v.norm() > cfg.v_max {
            v = DqVoltage::from_vec(v.to_vec() * (cfg.v_max / v.norm()));
        }
        self.held = v;

        frame.u_feasible = u;
        frame.lambda = costate.lambda;
        frame.z = z;
        frame.v_dq = v;
        frame.v_abc = inverse_park_clarke(sensors.theta, v, params);
        frame.report = report;
        Ok(frame)
    }
}

/// Largest relative RMS misfit accepted by [`closed_loop_tf_check`].
pub const FIT_RESIDUAL_LIMIT: f64 = 1e-3;

/// Fits `tau(t) = u + (tau0 - u) exp(-t/mu)` to a step response sampled from
/// `t = 0` and returns the fitted time constant.
pub fn closed_loop_tf_check(samples: &[(f64, f64)], u_step: f64) -> Result<f64> {
    let tau0 = samples.first().map(|s| s.1).unwrap_or(0.0);
    let span = u_step - tau0;
    if samples.len() < 3 || span == 0.0 {
        return Err(Error::PoorFit {
            residual: f64::INFINITY,
        });
    }
    // log-linear start: ln((u - tau)/(u - tau0)) = -t/mu
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, tau) in samples {
        let ratio = (u_step - tau) / span;
        if t > 0.0 && ratio > 0.02 && ratio < 1.0 {
            num += t * t;
            den += t * ratio.ln();
        }
    }
    if den >= 0.0 {
        return Err(Error::PoorFit {
            residual: f64::INFINITY,
        });
    }
    let mut mu = -num / den;
    // Gauss-Newton on the time constant
    for _ in 0..20 {
        let (mut jtj, mut jtr) = (0.0, 0.0);
        for &(t, tau) in samples {
            let e = (-t / mu).exp();
            let model = u_step - span * e;
            let dmodel = -span * e * t / (mu * mu);
            jtj += dmodel * dmodel;
            jtr += dmodel * (tau - model);
        }
        if jtj == 0.0 {
            break;
        }
        let step = jtr / jtj;
        mu += step;
        if step.abs() < 1e-15 * mu {
            break;
        }
    }
    let sq: f64 = samples
        .iter()
        .map(|&(t, tau)| (tau - (u_step - span * (-t / mu).exp())).powi(2))
        .sum();
    let residual = (sq / samples.len() as f64).sqrt() / span.abs();
    if !(mu > 0.0) || residual > FIT_RESIDUAL_LIMIT {
        return Err(Error::PoorFit { residual });
    }
    Ok(mu)
}
