//! Torque-exact input transformation.
//!
//! Substituting the voltage equations into the time derivative of the torque
//! map gives `tau + mu * dtau/dt = b(i).v + phi(i, omega)`. Choosing
//! `v = b (u - phi) / |b|^2 + z` with `b.z = 0` then yields the first-order
//! torque dynamics `tau + mu * dtau/dt = u`, leaving `z` free for other uses.
//!
//! `b_d` is `-(3p/2R) eta L_q i_q`. An `L_d` factor in place of `L_q` also
//! circulates for this term; it does not satisfy the torque-rate identity on
//! salient machines and is only reachable through [`BVariant::LdFactor`] for
//! comparison (see `torque_rate_identity_residual`).

use crate::error::{Error, Result};
use crate::machine::{torque, DqState, DqVoltage, MachineParams};
use crate::Vec2;

/// Below this `|b|` the torque channel is treated as uncontrollable.
pub const B_NORM_GUARD: f64 = 1e-6;

/// Relative tolerance on `|b.z| / (|b| |z|)` accepted by [`linearize`].
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Which expression to use for `b_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BVariant {
    /// `b_d = -(3p/2R) eta L_q i_q`, the form that satisfies the torque-rate identity.
    #[default]
    Derived,
    /// `b_d = -(3p/2R) eta L_d i_q`. Kept for comparison only.
    LdFactor,
}

/// `b`, `phi` and `|b|^2` at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationTerms {
    pub b: Vec2,
    pub phi: f64,
    pub b_norm_sq: f64,
}

impl LinearizationTerms {
    pub fn b_norm(&self) -> f64 {
        self.b_norm_sq.sqrt()
    }

    /// `b / |b|^2`, the voltage direction that drives the torque channel.
    pub fn torque_direction(&self) -> Vec2 {
        self.b / self.b_norm_sq
    }
}

pub fn b_vector(i: DqState, params: &MachineParams, variant: BVariant) -> Vec2 {
    let gain = params.torque_gain_over_r();
    let eta = params.eta();
    let l_d_term = match variant {
        BVariant::Derived => params.l_q,
        BVariant::LdFactor => params.l_d,
    };
    Vec2::new(
        -gain * eta * l_d_term * i.i_q,
        gain * (params.psi - eta * params.l_d * i.i_d),
    )
}

/// Drift term `phi(i, omega)` of the torque-rate identity.
pub fn phi(i: DqState, omega: f64, params: &MachineParams) -> f64 {
    let MachineParams { r, l_d, l_q, psi, .. } = *params;
    let eta = params.eta();
    let k = 1.5 * params.p();
    k * omega / r * (l_q * i.i_d * psi - eta * l_q * l_q * i.i_q * i.i_q - eta * l_d * l_d * i.i_d * i.i_d - psi * psi)
        + k * eta * l_q * i.i_d * i.i_q
}

pub fn compute_terms(i: DqState, omega: f64, params: &MachineParams) -> Result<LinearizationTerms> {
    compute_terms_with(i, omega, params, BVariant::Derived)
}

pub fn compute_terms_with(
    i: DqState,
    omega: f64,
    params: &MachineParams,
    variant: BVariant,
) -> Result<LinearizationTerms> {
    let b = b_vector(i, params, variant);
    let b_norm_sq = b[0] * b[0] + b[1] * b[1];
    if !(b_norm_sq.sqrt() >= B_NORM_GUARD) {
        return Err(Error::DegenerateB { norm: b_norm_sq.sqrt() });
    }
    Ok(LinearizationTerms {
        b,
        phi: phi(i, omega, params),
        b_norm_sq,
    })
}

/// `v = b (u - phi) / |b|^2 + z`. Rejects `z` that leaks into the torque channel.
pub fn linearize(u: f64, z: Vec2, terms: &LinearizationTerms) -> Result<DqVoltage> {
    let dot = terms.b.dot(&z);
    let limit = ORTHOGONALITY_TOL * terms.b_norm() * z.norm();
    if dot.abs() > limit {
        return Err(Error::OrthogonalityViolation { dot, limit });
    }
    Ok(DqVoltage::from_vec(terms.torque_direction() * (u - terms.phi) + z))
}

/// `(tau + mu * tau_dot) - (b.v + phi)` for a trajectory sample, where
/// `tau_dot` is a finite-difference estimate supplied by the caller.
pub fn torque_rate_identity_residual(
    i: DqState,
    tau_dot: f64,
    v: DqVoltage,
    omega: f64,
    params: &MachineParams,
    variant: BVariant,
) -> f64 {
    let b = b_vector(i, params, variant);
    torque(i, params) + params.mu() * tau_dot - (b.dot(&v.to_vec()) + phi(i, omega, params))
}
