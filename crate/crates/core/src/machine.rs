//! Salient-pole PMSM model in the rotor (dq) frame.
//!
//! Speed convention: every `omega` taken by this crate's electrical functions is
//! the *electrical* speed, i.e. the rate at which the dq frame rotates. The
//! voltage equations are written in those terms. A shaft turning at `w_m`
//! mechanical rad/s corresponds to `omega = p * w_m`. Angles passed to the
//! transforms are *mechanical*; the transforms multiply by `p` themselves.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::{Mat2, Vec2};

const TWO_PI_3: f64 = 2.0 * PI / 3.0;

/// Electrical constants of the machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineParams {
    /// Stator resistance (ohm).
    pub r: f64,
    /// d-axis inductance (H).
    pub l_d: f64,
    /// q-axis inductance (H).
    pub l_q: f64,
    /// Permanent-magnet flux linkage / back-EMF constant (Wb).
    pub psi: f64,
    /// Number of pole pairs.
    pub pole_pairs: u32,
}

impl MachineParams {
    pub fn new(r: f64, l_d: f64, l_q: f64, psi: f64, pole_pairs: u32) -> Result<Self> {
        let params = MachineParams {
            r,
            l_d,
            l_q,
            psi,
            pole_pairs,
        };
        params.validate()?;
        Ok(params)
    }

    /// The reference machine used throughout the examples and tests:
    /// p = 4, R = 0.5 ohm, L_d = 3 mH, L_q = 5 mH, psi = 0.1 Wb.
    pub fn reference() -> Self {
        MachineParams {
            r: 0.5,
            l_d: 3e-3,
            l_q: 5e-3,
            psi: 0.1,
            pole_pairs: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams {
                    field,
                    reason: format!("must be finite and > 0, got {value}"),
                })
            }
        };
        positive("r", self.r)?;
        positive("l_d", self.l_d)?;
        positive("l_q", self.l_q)?;
        positive("psi", self.psi)?;
        if self.pole_pairs == 0 {
            return Err(Error::InvalidParams {
                field: "pole_pairs",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Inductance ratio `L_q / L_d - 1`; zero for a non-salient machine.
    pub fn eta(&self) -> f64 {
        self.l_q / self.l_d - 1.0
    }

    /// Machine time constant `L_q / R` (s).
    pub fn mu(&self) -> f64 {
        self.l_q / self.r
    }

    pub fn p(&self) -> f64 {
        f64::from(self.pole_pairs)
    }

    /// `3p / (2R)`, the gain shared by every entry of `b`.
    pub(crate) fn torque_gain_over_r(&self) -> f64 {
        1.5 * self.p() / self.r
    }

    /// `diag(1/L_d, 1/L_q)`.
    pub fn inductance_inv(&self) -> Mat2 {
        Mat2::new(1.0 / self.l_d, 0.0, 0.0, 1.0 / self.l_q)
    }

    /// Copper loss `(3/2) R |i|^2` in watts.
    pub fn copper_loss(&self, i: DqState) -> f64 {
        1.5 * self.r * i.norm_sq()
    }
}

/// Rotor-frame current pair; the plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqState {
    pub i_d: f64,
    pub i_q: f64,
}

impl DqState {
    pub const ZERO: DqState = DqState { i_d: 0.0, i_q: 0.0 };

    pub fn new(i_d: f64, i_q: f64) -> Self {
        DqState { i_d, i_q }
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::new(self.i_d, self.i_q)
    }

    pub fn from_vec(v: Vec2) -> Self {
        DqState::new(v[0], v[1])
    }

    pub fn norm_sq(self) -> f64 {
        self.i_d * self.i_d + self.i_q * self.i_q
    }

    pub fn is_finite(self) -> bool {
        self.i_d.is_finite() && self.i_q.is_finite()
    }
}

/// Rotor-frame voltage pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DqVoltage {
    pub v_d: f64,
    pub v_q: f64,
}

impl DqVoltage {
    pub const ZERO: DqVoltage = DqVoltage { v_d: 0.0, v_q: 0.0 };

    pub fn new(v_d: f64, v_q: f64) -> Self {
        DqVoltage { v_d, v_q }
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::new(self.v_d, self.v_q)
    }

    pub fn from_vec(v: Vec2) -> Self {
        DqVoltage::new(v[0], v[1])
    }

    pub fn norm(self) -> f64 {
        self.v_d.hypot(self.v_q)
    }
}

/// Per-phase quantities (currents or voltages). Balanced sets sum to zero,
/// but nothing here enforces it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        AbcTriple { a, b, c }
    }
}

/// Park-Clarke transform `K(theta)`: phase quantities to the rotor frame,
/// with the 2/3 amplitude-invariant scaling. `theta` is the mechanical angle.
pub fn park_clarke(theta: f64, abc: AbcTriple, params: &MachineParams) -> DqState {
    let e = params.p() * theta;
    let (s0, c0) = e.sin_cos();
    let (s1, c1) = (e - TWO_PI_3).sin_cos();
    let (s2, c2) = (e + TWO_PI_3).sin_cos();
    DqState {
        i_d: 2.0 / 3.0 * (c0 * abc.a + c1 * abc.b + c2 * abc.c),
        i_q: 2.0 / 3.0 * (s0 * abc.a + s1 * abc.b + s2 * abc.c),
    }
}

/// Inverse transform `K^{-1}(theta)`: rotor-frame voltages to phase voltages.
pub fn inverse_park_clarke(theta: f64, v: DqVoltage, params: &MachineParams) -> AbcTriple {
    let e = params.p() * theta;
    let (s0, c0) = e.sin_cos();
    let (s1, c1) = (e - TWO_PI_3).sin_cos();
    let (s2, c2) = (e + TWO_PI_3).sin_cos();
    AbcTriple {
        a: c0 * v.v_d + s0 * v.v_q,
        b: c1 * v.v_d + s1 * v.v_q,
        c: c2 * v.v_d + s2 * v.v_q,
    }
}

/// Electromagnetic torque (N m): `(3/2) p (psi i_q + (L_d - L_q) i_d i_q)`.
pub fn torque(i: DqState, params: &MachineParams) -> f64 {
    1.5 * params.p() * (params.psi * i.i_q + (params.l_d - params.l_q) * i.i_d * i.i_q)
}

/// Speed-voltage and resistive terms of the voltage equations, so that
/// `L di/dt = h + v`.
pub fn h_vector(i: DqState, omega: f64, params: &MachineParams) -> Vec2 {
    Vec2::new(
        -params.r * i.i_d + params.l_q * i.i_q * omega,
        -params.r * i.i_q + params.l_d * i.i_d * omega - params.psi * omega,
    )
}

/// Current derivatives from the dq voltage equations.
pub fn dq_dynamics(i: DqState, v: DqVoltage, omega: f64, params: &MachineParams) -> DqState {
    let di_d = (-params.r * i.i_d + params.l_q * i.i_q * omega + v.v_d) / params.l_d;
    let di_q = (-params.r * i.i_q + params.l_d * i.i_d * omega - params.psi * omega + v.v_q) / params.l_q;
    DqState::new(di_d, di_q)
}
