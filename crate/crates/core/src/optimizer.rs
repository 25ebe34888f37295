//! Copper-loss minimizing channel.
//!
//! With the torque channel fixed by [`crate::linearize`], the current dynamics
//! under the auxiliary inputs are
//! `di/dt = f(i) = L^{-1} (b (u - phi) / |b|^2 + h + z)`. Minimizing the running
//! cost `|i|^2` gives the Hamiltonian `H = |i|^2 + lambda' f` and the costate
//! dynamics `dlambda/dt = A' lambda - 2 i` with `A = -df/di`. A single backward
//! Euler step from the terminal condition `lambda(T) = 0` over the horizon `h`
//! gives `lambda = 2 (I/h + A')^{-1} i`. `H` is linear in `z`, so over the
//! admissible segment `{z : b.z = 0, |z| <= z_max}` its minimum sits at the end
//! of the segment opposite to `B L^{-1} lambda`.

use crate::error::{Error, Result};
use crate::linearize::{b_vector, BVariant, LinearizationTerms, B_NORM_GUARD};
use crate::machine::{h_vector, DqState, MachineParams};
use crate::{Mat2, Vec2};

/// Directions `B L^{-1} lambda` shorter than this produce `z = 0`.
pub const DIRECTION_GUARD: f64 = 1e-9;

/// Largest condition number of `I/h + A'` accepted before falling back to `lambda = 2 h i`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Costate {
    pub lambda: Vec2,
}

/// Blocks of the costate system matrix `A = (u - phi) Lambda + Gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostateMatrices {
    pub a: Mat2,
    pub lambda_m: Mat2,
    pub gamma: Mat2,
    pub dphi_di: Vec2,
    pub dh_di: Mat2,
}

/// Per-tick record of every limit or guard that fired.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SaturationReport {
    pub u_clamped: bool,
    /// Torque command before clamping.
    pub u_original: f64,
    /// `|z|` equals the available voltage budget.
    pub z_at_limit: bool,
    /// `z` forced to zero (no budget left or no usable direction).
    pub z_zeroed: bool,
    pub b_degenerate: bool,
    pub ill_conditioned: bool,
}

impl SaturationReport {
    pub const U_CLAMPED: u32 = 1;
    pub const Z_AT_LIMIT: u32 = 1 << 1;
    pub const Z_ZEROED: u32 = 1 << 2;
    pub const B_DEGENERATE: u32 = 1 << 3;
    pub const ILL_CONDITIONED: u32 = 1 << 4;

    pub fn flags(&self) -> u32 {
        let mut f = 0;
        if self.u_clamped {
            f |= Self::U_CLAMPED;
        }
        if self.z_at_limit {
            f |= Self::Z_AT_LIMIT;
        }
        if self.z_zeroed {
            f |= Self::Z_ZEROED;
        }
        if self.b_degenerate {
            f |= Self::B_DEGENERATE;
        }
        if self.ill_conditioned {
            f |= Self::ILL_CONDITIONED;
        }
        f
    }
}

/// `d(b/|b|^2)/di` for the shipped `b`, columns indexed by `(i_d, i_q)`.
pub fn torque_direction_jacobian(terms: &LinearizationTerms, params: &MachineParams) -> Mat2 {
    let gain = params.torque_gain_over_r();
    let eta = params.eta();
    let db_di = Mat2::new(0.0, -gain * eta * params.l_q, -gain * eta * params.l_d, 0.0);
    let b = terms.b;
    let n2 = terms.b_norm_sq;
    (Mat2::identity() / n2 - b * b.transpose() * (2.0 / (n2 * n2))) * db_di
}

/// Gradient of `phi` with respect to `(i_d, i_q)`.
pub fn phi_gradient(i: DqState, omega: f64, params: &MachineParams) -> Vec2 {
    let MachineParams { r, l_d, l_q, psi, .. } = *params;
    let eta = params.eta();
    let mu = params.mu();
    let k = 1.5 * params.p();
    Vec2::new(
        k * (mu * omega * psi + eta * l_q * i.i_q - 2.0 * omega / r * eta * l_d * l_d * i.i_d),
        k * (-2.0 * omega * mu * eta * l_q * i.i_q + eta * l_q * i.i_d),
    )
}

/// Jacobian of `h` with respect to `(i_d, i_q)`.
pub fn h_jacobian(omega: f64, params: &MachineParams) -> Mat2 {
    Mat2::new(-params.r, params.l_q * omega, params.l_d * omega, -params.r)
}

pub fn costate_matrices(
    i: DqState,
    omega: f64,
    u: f64,
    terms: &LinearizationTerms,
    params: &MachineParams,
) -> Result<CostateMatrices> {
    if !(terms.b_norm() >= B_NORM_GUARD) {
        return Err(Error::DegenerateB { norm: terms.b_norm() });
    }
    let l_inv = params.inductance_inv();
    let lambda_m = -(l_inv * torque_direction_jacobian(terms, params));
    let dphi_di = phi_gradient(i, omega, params);
    let dh_di = h_jacobian(omega, params);
    let gamma = l_inv * (terms.torque_direction() * dphi_di.transpose() - dh_di);
    let a = lambda_m * (u - terms.phi) + gamma;
    Ok(CostateMatrices {
        a,
        lambda_m,
        gamma,
        dphi_di,
        dh_di,
    })
}

/// `Lambda` in the closed form that circulates with the `L_d`-factor `b_d`:
/// `(3 p eta L_d / (2 R |b|^4)) L^{-1} [[2 b_d b_q, b_q^2 - b_d^2], [b_d^2 - b_q^2, 2 b_d b_q]]`,
/// evaluated with the `b` of the chosen variant.
///
/// Its off-diagonal entries agree with `-L^{-1} d(b/|b|^2)/di` of the
/// `L_d`-factor `b`; the diagonal entries have the opposite sign.
pub fn closed_form_lambda(i: DqState, params: &MachineParams, variant: BVariant) -> Mat2 {
    let b = b_vector(i, params, variant);
    let (bd, bq) = (b[0], b[1]);
    let n2 = bd * bd + bq * bq;
    let k = 3.0 * params.p() * params.eta() * params.l_d / (2.0 * params.r * n2 * n2);
    params.inductance_inv() * Mat2::new(2.0 * bd * bq, bq * bq - bd * bd, bd * bd - bq * bq, 2.0 * bd * bq) * k
}

fn condition_number(m: &Mat2) -> f64 {
    // singular values of a 2x2 from its Frobenius norm and determinant
    let fro2 = m.norm_squared();
    let det = m.determinant().abs();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let s_max = ((fro2 + disc) / 2.0).sqrt();
    let s_min_sq = (fro2 - disc) / 2.0;
    // recover the small singular value from det for accuracy
    let s_min = if s_max > 0.0 { det / s_max } else { 0.0 };
    if s_min_sq <= 0.0 && s_min == 0.0 {
        f64::INFINITY
    } else {
        s_max / s_min
    }
}

/// `lambda = 2 (I/h + A')^{-1} i`.
pub fn estimate_costate(i: DqState, a: &Mat2, horizon: f64) -> Result<Costate> {
    let m = Mat2::identity() / horizon + a.transpose();
    let cond = condition_number(&m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned { cond });
    }
    let inv = m.try_inverse().ok_or(Error::IllConditioned { cond })?;
    Ok(Costate {
        lambda: inv * i.to_vec() * 2.0,
    })
}

/// Costate used when `I/h + A'` cannot be inverted reliably (`A` dropped).
pub fn fallback_costate(i: DqState, horizon: f64) -> Costate {
    Costate {
        lambda: i.to_vec() * (2.0 * horizon),
    }
}

/// Projection onto the orthogonal complement of `b`: `I - b b' / |b|^2`.
pub fn projection(b: Vec2) -> Result<Mat2> {
    let n2 = b.norm_squared();
    if !(n2.sqrt() >= B_NORM_GUARD) {
        return Err(Error::DegenerateB { norm: n2.sqrt() });
    }
    Ok(Mat2::identity() - b * b.transpose() / n2)
}

/// Feasible torque band `[phi - |b| v_max, phi + |b| v_max]`.
pub fn torque_bounds(terms: &LinearizationTerms, v_max: f64) -> (f64, f64) {
    let span = terms.b_norm() * v_max;
    (terms.phi - span, terms.phi + span)
}

pub fn clamp_torque_command(u: f64, terms: &LinearizationTerms, v_max: f64) -> (f64, SaturationReport) {
    let (u_min, u_max) = torque_bounds(terms, v_max);
    let u_feasible = u.clamp(u_min, u_max);
    let report = SaturationReport {
        u_clamped: u_feasible != u,
        u_original: u,
        ..SaturationReport::default()
    };
    (u_feasible, report)
}

/// Voltage budget left for `z`: `sqrt(v_max^2 - (u - phi)^2 / |b|^2)`.
pub fn z_limit(u_feasible: f64, terms: &LinearizationTerms, v_max: f64) -> Result<f64> {
    let gap = u_feasible - terms.phi;
    let torque_part = gap * gap / terms.b_norm_sq;
    let disc = v_max * v_max - torque_part;
    // rounding bound for the subtraction `u - phi`, which cancels when |phi| is large
    let slack =
        8.0 * f64::EPSILON * ((u_feasible.abs() + terms.phi.abs()) * gap.abs() / terms.b_norm_sq + v_max * v_max);
    if disc >= 0.0 {
        Ok(disc.sqrt())
    } else if disc >= -slack {
        Ok(0.0)
    } else {
        Err(Error::NegativeDiscriminant { discriminant: disc })
    }
}

/// Minimizer of `lambda' L^{-1} z` over `{z : b.z = 0, |z| <= z_max}`:
/// `z = -(z_max / |d|) d` with `d = B L^{-1} lambda`.
pub fn optimal_z(costate: &Costate, b_proj: &Mat2, l_inv: &Mat2, z_max: f64) -> (Vec2, SaturationReport) {
    let raw = b_proj * (l_inv * costate.lambda);
    // second pass removes the rounding residue along b
    let d = b_proj * raw;
    let d_norm = d.norm();
    let mut report = SaturationReport::default();
    if z_max <= 0.0 || !(d_norm >= DIRECTION_GUARD) {
        report.z_zeroed = true;
        return (Vec2::zeros(), report);
    }
    report.z_at_limit = true;
    (d * (-z_max / d_norm), report)
}

/// Signed step along the admissible `z` line for a sampled controller.
///
/// `direction` is a unit vector orthogonal to `b`. Returns the `s` in
/// `[-z_max, z_max]` that minimizes the one-step Euler prediction of `|i|^2`
/// over the control period `dt` with `z = s * direction` held, where `drift`
/// is the `z`-free part of `L di/dt`. Near the optimum the costate's component
/// along this line goes through zero, so the segment is searched on both sides.
pub fn lookahead_step(i: DqState, direction: Vec2, drift: Vec2, l_inv: &Mat2, dt: f64, z_max: f64) -> f64 {
    let free = i.to_vec() + l_inv * drift * dt;
    let push = l_inv * direction * dt;
    let denom = push.norm_squared();
    if !(denom > 0.0) || !(z_max > 0.0) {
        return 0.0;
    }
    let s = -free.dot(&push) / denom;
    s.clamp(-z_max, z_max)
}

/// `H = |i|^2 + lambda' L^{-1} (b (u - phi)/|b|^2 + h + z)`.
pub fn hamiltonian(
    i: DqState,
    costate: &Costate,
    u: f64,
    z: Vec2,
    terms: &LinearizationTerms,
    omega: f64,
    params: &MachineParams,
) -> Result<f64> {
    if !(terms.b_norm() >= B_NORM_GUARD) {
        return Err(Error::DegenerateB { norm: terms.b_norm() });
    }
    let drive = terms.torque_direction() * (u - terms.phi) + h_vector(i, omega, params) + z;
    Ok(i.norm_sq() + costate.lambda.dot(&(params.inductance_inv() * drive)))
}
