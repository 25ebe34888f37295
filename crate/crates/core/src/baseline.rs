//! Classical `i_d = 0` vector control, used as a reference point in reports.
//!
//! Two PI current loops with speed-voltage decoupling. Gains place the loop
//! zero on the electrical pole (`kp = L * wc`, `ki = R * wc`).

use crate::error::{Error, Result};
use crate::machine::{inverse_park_clarke, park_clarke, torque, DqVoltage, MachineParams};
use crate::optimizer::SaturationReport;
use crate::torque_loop::{ControlFrame, Sensors};
use crate::Vec2;

/// Default current-loop bandwidth (rad/s).
pub const CURRENT_LOOP_BANDWIDTH: f64 = 2.0 * std::f64::consts::PI * 500.0;

#[derive(Debug, Clone)]
pub struct IdZeroController {
    params: MachineParams,
    v_max: f64,
    dt: f64,
    bandwidth: f64,
    integral: Vec2,
}

impl IdZeroController {
    pub fn new(params: MachineParams, v_max: f64, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(v_max > 0.0 && dt > 0.0) {
            return Err(Error::validation("v_max/dt_ctrl", "must be > 0"));
        }
        Ok(IdZeroController {
            params,
            v_max,
            dt,
            bandwidth: CURRENT_LOOP_BANDWIDTH,
            integral: Vec2::zeros(),
        })
    }

    pub fn control_step(&mut self, t: f64, sensors: Sensors, tau_ref: f64) -> Result<ControlFrame> {
        let p = &self.params;
        let i = park_clarke(sensors.theta, sensors.i_abc, p);
        if !i.is_finite() {
            return Err(Error::NonFinite {
                what: "measured current",
                t,
            });
        }
        let omega = sensors.omega;
        let i_q_ref = tau_ref / (1.5 * p.p() * p.psi);
        let err = Vec2::new(-i.i_d, i_q_ref - i.i_q);
        let candidate = self.integral + err * self.dt;
        let wc = self.bandwidth;
        let pi_d = p.l_d * wc * err[0] + p.r * wc * candidate[0];
        let pi_q = p.l_q * wc * err[1] + p.r * wc * candidate[1];
        let mut v = Vec2::new(
            pi_d - omega * p.l_q * i.i_q,
            pi_q - omega * p.l_d * i.i_d + omega * p.psi,
        );
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::NonFinite {
                what: "voltage command",
                t,
            });
        }
        let norm = v.norm();
        let saturated = norm > self.v_max;
        if saturated {
            v *= self.v_max / norm;
        } else {
            self.integral = candidate;
        }
        let v_dq = DqVoltage::from_vec(v);
        Ok(ControlFrame {
            t,
            theta: sensors.theta,
            omega,
            i_abc: sensors.i_abc,
            i_dq: i,
            tau_ref,
            tau_est: torque(i, p),
            u_raw: tau_ref,
            u_feasible: tau_ref,
            b: Vec2::zeros(),
            z_max: 0.0,
            lambda: Vec2::zeros(),
            z: Vec2::zeros(),
            v_dq,
            v_abc: inverse_park_clarke(sensors.theta, v_dq, p),
            report: SaturationReport {
                u_clamped: saturated,
                u_original: tau_ref,
                ..SaturationReport::default()
            },
            p_copper: p.copper_loss(i),
        })
    }
}
