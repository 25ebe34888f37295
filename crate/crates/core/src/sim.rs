//! Fixed-step plant simulator and scenario runner.
//!
//! The plant is the dq voltage model integrated with classical RK4 at
//! `dt_plant`. The controller runs every `dt_ctrl` and its voltage is held
//! between ticks. Speed is either prescribed (exogenous, as the controller
//! assumes) or produced by a one-mass mechanical model
//! `J dw_m/dt = tau - tau_load - c w_m`, with `omega = p w_m`.

use std::convert::Infallible;
use std::fmt;
use std::str::FromStr;

use crate::baseline::IdZeroController;
use crate::error::{Error, Result};
use crate::machine::{dq_dynamics, inverse_park_clarke, torque, DqState, DqVoltage, MachineParams};
use crate::torque_loop::{ControlFrame, Controller, ControllerConfig, PiGains, Sensors, ZChannel, ZStep};

/// A scalar signal over time.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    Step {
        initial: f64,
        final_value: f64,
        at: f64,
    },
    Sinusoid {
        offset: f64,
        amplitude: f64,
        /// Hz
        frequency: f64,
        /// rad
        phase: f64,
    },
    /// `low` until `rise_start`, linear to `high` at `rise_end`, held until
    /// `fall_start`, linear back to `low` at `fall_end`.
    Trapezoid {
        low: f64,
        high: f64,
        rise_start: f64,
        rise_end: f64,
        fall_start: f64,
        fall_end: f64,
    },
    /// Piecewise-linear through `(t, value)` points, held flat outside.
    Table(Vec<(f64, f64)>),
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Step {
                initial,
                final_value,
                at,
            } => {
                if t < *at {
                    *initial
                } else {
                    *final_value
                }
            }
            Profile::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
            Profile::Trapezoid {
                low,
                high,
                rise_start,
                rise_end,
                fall_start,
                fall_end,
            } => {
                let ramp = |t0: f64, t1: f64, from: f64, to: f64| {
                    if t1 > t0 {
                        from + (to - from) * (t - t0) / (t1 - t0)
                    } else {
                        to
                    }
                };
                if t < *rise_start {
                    *low
                } else if t < *rise_end {
                    ramp(*rise_start, *rise_end, *low, *high)
                } else if t < *fall_start {
                    *high
                } else if t < *fall_end {
                    ramp(*fall_start, *fall_end, *high, *low)
                } else {
                    *low
                }
            }
            Profile::Table(points) => {
                let first = points[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            Profile::Constant(v) => finite(&[*v]),
            Profile::Step {
                initial,
                final_value,
                at,
            } => finite(&[*initial, *final_value, *at]),
            Profile::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => finite(&[*offset, *amplitude, *frequency, *phase]),
            Profile::Trapezoid {
                low,
                high,
                rise_start,
                rise_end,
                fall_start,
                fall_end,
            } => {
                if !finite(&[*low, *high, *rise_start, *rise_end, *fall_start, *fall_end]) {
                    false
                } else if !(rise_start <= rise_end && rise_end <= fall_start && fall_start <= fall_end) {
                    return Err(Error::validation(
                        field,
                        "trapezoid times must satisfy rise_start <= rise_end <= fall_start <= fall_end",
                    ));
                } else {
                    true
                }
            }
            Profile::Table(points) => {
                if points.is_empty() {
                    return Err(Error::validation(field, "table needs at least one point"));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::validation(field, "table times must be strictly increasing"));
                }
                points.iter().all(|(t, v)| t.is_finite() && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(field, "profile values must be finite"))
        }
    }
}

/// One-mass shaft model.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalModel {
    /// kg m^2
    pub inertia: f64,
    /// N m s
    pub friction: f64,
    /// Load torque (N m) opposing the motor.
    pub load: Profile,
    /// Mechanical speed at t = 0 (rad/s).
    pub initial_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedSource {
    /// Electrical speed profile (rad/s).
    Prescribed(Profile),
    Mechanical(MechanicalModel),
}

/// How the controller output reaches the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Controller runs every `dt_ctrl`; the voltage is held in between.
    #[default]
    ZeroOrderHold,
    /// Control law evaluated at every integrator stage (continuous-time
    /// feedback). The PI integrator still advances once per `dt_ctrl`.
    PerStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: MachineParams,
    /// s
    pub duration: f64,
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    /// Costate horizon (s).
    pub horizon: f64,
    pub v_max: f64,
    pub torque: Profile,
    pub speed: SpeedSource,
    pub initial: DqState,
    /// Mechanical angle at t = 0 (rad).
    pub initial_theta: f64,
    pub gains: PiGains,
    pub alpha_z: f64,
    pub z_step: ZStep,
    pub sampling: Sampling,
}

pub const DEFAULT_DT_PLANT: f64 = 1e-6;
pub const DEFAULT_DT_CTRL: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 1e-3;
pub const DEFAULT_V_MAX: f64 = 48.0;

impl Scenario {
    /// Scenario with default rates and gains.
    pub fn new(params: MachineParams, duration: f64, torque: Profile, speed: SpeedSource) -> Self {
        Scenario {
            params,
            duration,
            dt_plant: DEFAULT_DT_PLANT,
            dt_ctrl: DEFAULT_DT_CTRL,
            horizon: DEFAULT_HORIZON,
            v_max: DEFAULT_V_MAX,
            torque,
            speed,
            initial: DqState::ZERO,
            initial_theta: 0.0,
            gains: PiGains::default(),
            alpha_z: 1.0,
            z_step: ZStep::Lookahead,
            sampling: Sampling::ZeroOrderHold,
        }
    }

    /// Standard mixed scenario: `tau* = 4 sin(2 pi 5 t)` N m on the reference
    /// machine while the electrical speed ramps 0 -> 200 rad/s, holds, and
    /// ramps back down over 0.4 s.
    pub fn standard_mixed() -> Self {
        Scenario::new(
            MachineParams::reference(),
            0.4,
            Profile::Sinusoid {
                offset: 0.0,
                amplitude: 4.0,
                frequency: 5.0,
                phase: 0.0,
            },
            SpeedSource::Prescribed(Profile::Trapezoid {
                low: 0.0,
                high: 200.0,
                rise_start: 0.0,
                rise_end: 0.1,
                fall_start: 0.3,
                fall_end: 0.4,
            }),
        )
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt_ctrl).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_plant).round() as usize
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
        positive("duration", self.duration)?;
        positive("dt_plant", self.dt_plant)?;
        positive("dt_ctrl", self.dt_ctrl)?;
        positive("horizon", self.horizon)?;
        positive("v_max", self.v_max)?;
        if self.dt_plant > self.dt_ctrl {
            return Err(Error::validation(
                "dt_plant, dt_ctrl",
                format!(
                    "dt_plant ({}) must not exceed dt_ctrl ({})",
                    self.dt_plant, self.dt_ctrl
                ),
            ));
        }
        let integer_ratio = |a: f64, b: f64| {
            let r = a / b;
            (r - r.round()).abs() <= 1e-9 * r.max(1.0) && r.round() >= 1.0
        };
        if !integer_ratio(self.duration, self.dt_ctrl) {
            return Err(Error::validation(
                "duration, dt_ctrl",
                format!("dt_ctrl ({}) must divide duration ({})", self.dt_ctrl, self.duration),
            ));
        }
        if !integer_ratio(self.dt_ctrl, self.dt_plant) {
            return Err(Error::validation(
                "dt_ctrl, dt_plant",
                format!("dt_plant ({}) must divide dt_ctrl ({})", self.dt_plant, self.dt_ctrl),
            ));
        }
        if !self.initial.is_finite() || !self.initial_theta.is_finite() {
            return Err(Error::validation("initial", "initial state must be finite"));
        }
        if !(self.gains.kp >= 0.0 && self.gains.ki >= 0.0) {
            return Err(Error::validation("kp, ki", "PI gains must be >= 0"));
        }
        if !(self.alpha_z > 0.0 && self.alpha_z <= 1.0) {
            return Err(Error::validation("alpha_z", "must lie in (0, 1]"));
        }
        self.torque.validate("torque")?;
        match &self.speed {
            SpeedSource::Prescribed(p) => p.validate("speed")?,
            SpeedSource::Mechanical(m) => {
                positive("inertia", m.inertia)?;
                if !(m.friction >= 0.0 && m.friction.is_finite()) {
                    return Err(Error::validation("friction", "must be finite and >= 0"));
                }
                if !m.initial_speed.is_finite() {
                    return Err(Error::validation("initial_speed", "must be finite"));
                }
                m.load.validate("load")?;
            }
        }
        Ok(())
    }

    pub fn controller_config(&self, z_channel: ZChannel) -> ControllerConfig {
        ControllerConfig {
            params: self.params,
            v_max: self.v_max,
            dt: self.dt_ctrl,
            horizon: self.horizon,
            gains: self.gains,
            alpha_z: self.alpha_z,
            z_channel,
            z_step: self.z_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    /// Optimal feedback linearization (full pipeline).
    Oflc,
    /// Feedback linearization with `z = 0`.
    FlcZ0,
    /// `i_d = 0` current-vector control.
    IdZero,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Oflc, ControllerKind::FlcZ0, ControllerKind::IdZero];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Oflc => "oflc",
            ControllerKind::FlcZ0 => "flc_z0",
            ControllerKind::IdZero => "id_zero",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oflc" => Ok(ControllerKind::Oflc),
            "flc_z0" | "flc-z0" | "flc" => Ok(ControllerKind::FlcZ0),
            "id_zero" | "id-zero" | "idzero" => Ok(ControllerKind::IdZero),
            other => Err(Error::validation(
                "controller",
                format!("unknown controller `{other}` (expected oflc, flc_z0 or id_zero)"),
            )),
        }
    }
}

/// Tick counts for each guard or limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaturationStats {
    pub ticks: usize,
    pub u_clamped: usize,
    pub z_at_limit: usize,
    pub z_zeroed: usize,
    pub b_degenerate: usize,
    pub ill_conditioned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub controller: ControllerKind,
    pub frames: Vec<ControlFrame>,
    /// `integral |i|^2 dt` up to each frame's time, aligned with `frames`.
    pub cumulative_cost: Vec<f64>,
    /// `integral |i|^2 dt` over the whole run (A^2 s).
    pub cost_integral: f64,
    /// `integral (3/2) R |i|^2 dt` (J).
    pub copper_energy: f64,
    /// RMS of `tau_ref - tau_est` over the control ticks (N m).
    pub rms_tracking_error: f64,
    pub saturation: SaturationStats,
}

/// A run that hit a numerical failure, with everything simulated up to it.
#[derive(Debug, Clone)]
pub struct RunAbort {
    pub error: Error,
    pub partial: RunResult,
}

impl fmt::Display for RunAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} ticks)", self.error, self.partial.frames.len())
    }
}

impl std::error::Error for RunAbort {}

/// Trapezoidal running integral of `|i|^2` and the matching copper energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAccumulator {
    resistance: f64,
    cost: f64,
    last: Option<(f64, f64)>,
}

impl EnergyAccumulator {
    pub fn new(params: &MachineParams) -> Self {
        EnergyAccumulator {
            resistance: params.r,
            cost: 0.0,
            last: None,
        }
    }

    pub fn push(&mut self, t: f64, i: DqState) {
        let sq = i.norm_sq();
        if let Some((t0, sq0)) = self.last {
            self.cost += 0.5 * (sq0 + sq) * (t - t0);
        }
        self.last = Some((t, sq));
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn copper_energy(&self) -> f64 {
        1.5 * self.resistance * self.cost
    }
}

/// `(integral |i|^2 dt, integral (3/2) R |i|^2 dt)` over a frame trace.
pub fn energy_accounting(frames: &[ControlFrame], params: &MachineParams) -> (f64, f64) {
    let mut acc = EnergyAccumulator::new(params);
    for f in frames {
        acc.push(f.t, f.i_dq);
    }
    (acc.cost(), acc.copper_energy())
}

/// One classical RK4 step of the voltage equations with `v` and `omega` held.
pub fn rk4_plant_step(i: DqState, v: DqVoltage, omega: f64, dt: f64, params: &MachineParams) -> Result<DqState> {
    let next = rk4(i, dt, |x| dq_dynamics(x, v, omega, params));
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite {
            what: "plant state",
            t: f64::NAN,
        })
    }
}

/// RK4 step with `v` held and the electrical speed evaluated at each stage
/// time, for speed profiles that change within the step.
pub fn rk4_plant_step_varying(
    i: DqState,
    v: DqVoltage,
    omega: impl Fn(f64) -> f64,
    t: f64,
    dt: f64,
    params: &MachineParams,
) -> DqState {
    let law =
        |tt: f64, x: DqState| -> std::result::Result<DqState, Infallible> { Ok(dq_dynamics(x, v, omega(tt), params)) };
    let Ok(next) = rk4_timed(i, t, dt, law);
    next
}

fn rk4(i: DqState, dt: f64, f: impl Fn(DqState) -> DqState) -> DqState {
    let add = |x: DqState, k: DqState, s: f64| DqState::new(x.i_d + s * k.i_d, x.i_q + s * k.i_q);
    let k1 = f(i);
    let k2 = f(add(i, k1, 0.5 * dt));
    let k3 = f(add(i, k2, 0.5 * dt));
    let k4 = f(add(i, k3, dt));
    DqState::new(
        i.i_d + dt / 6.0 * (k1.i_d + 2.0 * k2.i_d + 2.0 * k3.i_d + k4.i_d),
        i.i_q + dt / 6.0 * (k1.i_q + 2.0 * k2.i_q + 2.0 * k3.i_q + k4.i_q),
    )
}

enum AnyController {
    Flc(Controller),
    IdZero(IdZeroController),
}

impl AnyController {
    fn new(kind: ControllerKind, s: &Scenario) -> Result<Self> {
        Ok(match kind {
            ControllerKind::Oflc => AnyController::Flc(Controller::new(s.controller_config(ZChannel::Optimal))?),
            ControllerKind::FlcZ0 => AnyController::Flc(Controller::new(s.controller_config(ZChannel::Off))?),
            ControllerKind::IdZero => AnyController::IdZero(IdZeroController::new(s.params, s.v_max, s.dt_ctrl)?),
        })
    }

    fn step(&mut self, t: f64, sensors: Sensors, tau_ref: f64) -> Result<ControlFrame> {
        match self {
            AnyController::Flc(c) => c.control_step(t, sensors, tau_ref),
            AnyController::IdZero(c) => c.control_step(t, sensors, tau_ref),
        }
    }

    /// Voltage the law would apply at an intermediate state, without
    /// advancing any controller state.
    fn peek(&self, t: f64, sensors: Sensors, tau_ref: f64) -> Result<DqVoltage> {
        match self {
            AnyController::Flc(c) => Ok(c.clone().control_step(t, sensors, tau_ref)?.v_dq),
            AnyController::IdZero(c) => Ok(c.clone().control_step(t, sensors, tau_ref)?.v_dq),
        }
    }
}

/// Shaft state carried alongside the electrical state.
struct Shaft {
    theta: f64,
    /// mechanical speed, only used by the mechanical model
    speed: f64,
}

fn electrical_speed(s: &Scenario, shaft: &Shaft, t: f64) -> f64 {
    match &s.speed {
        SpeedSource::Prescribed(p) => p.eval(t),
        SpeedSource::Mechanical(_) => s.params.p() * shaft.speed,
    }
}

fn sensors(s: &Scenario, i: DqState, theta: f64, omega: f64) -> Sensors {
    Sensors {
        theta,
        omega,
        i_abc: inverse_park_clarke(theta, DqVoltage::new(i.i_d, i.i_q), &s.params),
    }
}

/// Simulates `scenario` under the chosen controller. Deterministic.
pub fn run_scenario(scenario: &Scenario, kind: ControllerKind) -> std::result::Result<RunResult, Box<RunAbort>> {
    let empty = |error: Error| {
        Box::new(RunAbort {
            error,
            partial: RunResult {
                controller: kind,
                frames: Vec::new(),
                cumulative_cost: Vec::new(),
                cost_integral: 0.0,
                copper_energy: 0.0,
                rms_tracking_error: 0.0,
                saturation: SaturationStats::default(),
            },
        })
    };
    scenario.validate().map_err(empty)?;
    let mut controller = AnyController::new(kind, scenario).map_err(empty)?;

    let params = scenario.params;
    let ticks = scenario.ticks();
    let sub = scenario.substeps();
    let h = scenario.dt_ctrl / sub as f64;

    let mut i = scenario.initial;
    let mut shaft = Shaft {
        theta: scenario.initial_theta,
        speed: match &scenario.speed {
            SpeedSource::Mechanical(m) => m.initial_speed,
            SpeedSource::Prescribed(_) => 0.0,
        },
    };
    let mut frames = Vec::with_capacity(ticks);
    let mut cumulative = Vec::with_capacity(ticks);
    let mut energy = EnergyAccumulator::new(&params);
    energy.push(0.0, i);

    let mut failure = None;
    'ticks: for k in 0..ticks {
        let t = k as f64 * scenario.dt_ctrl;
        let omega = electrical_speed(scenario, &shaft, t);
        let tau_ref = scenario.torque.eval(t);
        let frame = match controller.step(t, sensors(scenario, i, shaft.theta, omega), tau_ref) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        frames.push(frame);
        cumulative.push(energy.cost());

        for s in 0..sub {
            let ts = t + s as f64 * h;
            let next = match scenario.sampling {
                Sampling::ZeroOrderHold => rk4_plant_step_varying(
                    i,
                    frame.v_dq,
                    |tt| electrical_speed(scenario, &shaft, tt),
                    ts,
                    h,
                    &params,
                ),
                Sampling::PerStage => {
                    let law = |tt: f64, x: DqState| -> Result<DqState> {
                        let w = electrical_speed(scenario, &shaft, tt);
                        let v = controller.peek(tt, sensors(scenario, x, shaft.theta, w), scenario.torque.eval(tt))?;
                        Ok(dq_dynamics(x, v, w, &params))
                    };
                    match rk4_timed(i, ts, h, law) {
                        Ok(x) => x,
                        Err(e) => {
                            failure = Some(e);
                            break 'ticks;
                        }
                    }
                }
            };
            if !next.is_finite() {
                failure = Some(Error::NonFinite {
                    what: "plant state",
                    t: ts + h,
                });
                break 'ticks;
            }
            i = next;
            energy.push(ts + h, i);
            match &scenario.speed {
                SpeedSource::Prescribed(p) => {
                    let w_avg = 0.5 * (p.eval(ts) + p.eval(ts + h));
                    shaft.theta += w_avg / params.p() * h;
                }
                SpeedSource::Mechanical(m) => {
                    let accel = (torque(i, &params) - m.load.eval(ts + h) - m.friction * shaft.speed) / m.inertia;
                    let before = shaft.speed;
                    shaft.speed += accel * h;
                    shaft.theta += 0.5 * (before + shaft.speed) * h;
                    if !shaft.speed.is_finite() {
                        failure = Some(Error::NonFinite {
                            what: "shaft speed",
                            t: ts + h,
                        });
                        break 'ticks;
                    }
                }
            }
        }
    }

    let result = summarize(kind, frames, cumulative, &energy);
    match failure {
        None => Ok(result),
        Some(error) => Err(Box::new(RunAbort { error, partial: result })),
    }
}

fn rk4_timed<E>(
    i: DqState,
    t: f64,
    dt: f64,
    f: impl Fn(f64, DqState) -> std::result::Result<DqState, E>,
) -> std::result::Result<DqState, E> {
    let add = |x: DqState, k: DqState, s: f64| DqState::new(x.i_d + s * k.i_d, x.i_q + s * k.i_q);
    let k1 = f(t, i)?;
    let k2 = f(t + 0.5 * dt, add(i, k1, 0.5 * dt))?;
    let k3 = f(t + 0.5 * dt, add(i, k2, 0.5 * dt))?;
    let k4 = f(t + dt, add(i, k3, dt))?;
    Ok(DqState::new(
        i.i_d + dt / 6.0 * (k1.i_d + 2.0 * k2.i_d + 2.0 * k3.i_d + k4.i_d),
        i.i_q + dt / 6.0 * (k1.i_q + 2.0 * k2.i_q + 2.0 * k3.i_q + k4.i_q),
    ))
}

fn summarize(
    kind: ControllerKind,
    frames: Vec<ControlFrame>,
    cumulative_cost: Vec<f64>,
    energy: &EnergyAccumulator,
) -> RunResult {
    let mut stats = SaturationStats {
        ticks: frames.len(),
        ..SaturationStats::default()
    };
    let mut sq_err = 0.0;
    for f in &frames {
        let r = &f.report;
        stats.u_clamped += usize::from(r.u_clamped);
        stats.z_at_limit += usize::from(r.z_at_limit);
        stats.z_zeroed += usize::from(r.z_zeroed);
        stats.b_degenerate += usize::from(r.b_degenerate);
        stats.ill_conditioned += usize::from(r.ill_conditioned);
        sq_err += (f.tau_ref - f.tau_est).powi(2);
    }
    let rms = if frames.is_empty() {
        0.0
    } else {
        (sq_err / frames.len() as f64).sqrt()
    };
    RunResult {
        controller: kind,
        frames,
        cumulative_cost,
        cost_integral: energy.cost(),
        copper_energy: energy.copper_energy(),
        rms_tracking_error: rms,
        saturation: stats,
    }
}
