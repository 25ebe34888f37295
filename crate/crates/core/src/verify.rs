//! Runtime invariant checks, used by `oflc selftest`.

use crate::linearize::{compute_terms, phi};
use crate::machine::{
    h_vector, inverse_park_clarke, park_clarke, torque, AbcTriple, DqState, DqVoltage, MachineParams,
};
use crate::optimizer::{costate_matrices, estimate_costate, hamiltonian, optimal_z, projection, z_limit};
use crate::sim::{run_scenario, ControllerKind, Scenario};
use crate::torque_loop::ControlFrame;
use crate::{Mat2, Vec2};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, worst: f64, limit: f64) -> Self {
        Check {
            name,
            passed: worst <= limit,
            detail: format!("worst {worst:.3e} (limit {limit:.1e})"),
        }
    }
}

/// Violations of the per-frame contract, empty when the frame is consistent.
pub fn frame_violations(f: &ControlFrame, params: &MachineParams, v_max: f64) -> Vec<String> {
    let mut out = Vec::new();
    let abc = inverse_park_clarke(f.theta, f.v_dq, params);
    let d = (abc.a - f.v_abc.a)
        .abs()
        .max((abc.b - f.v_abc.b).abs())
        .max((abc.c - f.v_abc.c).abs());
    if d > 1e-12 * (1.0 + f.v_dq.norm()) {
        out.push(format!("t={}: v_abc differs from inverse transform by {d:e}", f.t));
    }
    if f.tau_est != torque(f.i_dq, params) {
        out.push(format!("t={}: tau_est is not the torque of i_dq", f.t));
    }
    if f.v_dq.norm() > v_max * (1.0 + 1e-9) {
        out.push(format!("t={}: |v_dq| = {} exceeds v_max", f.t, f.v_dq.norm()));
    }
    let dot = f.b.dot(&f.z).abs();
    if dot > 1e-10 * f.b.norm() * f.z.norm() {
        out.push(format!("t={}: |b.z| = {dot:e} breaks orthogonality", f.t));
    }
    if f.report.u_clamped && f.z != Vec2::zeros() {
        out.push(format!("t={}: u clamped but z nonzero", f.t));
    }
    out
}

fn grid_states() -> impl Iterator<Item = (DqState, f64)> {
    (0..9).flat_map(|a| {
        (0..9).map(move |b| {
            let i = DqState::new(-20.0 + 4.3 * a as f64, -18.0 + 4.7 * b as f64);
            let omega = -400.0 + 97.0 * ((a * 9 + b) % 9) as f64;
            (i, omega)
        })
    })
}

fn transform_round_trip(params: &MachineParams) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let theta = -10.0 + 0.02 * k as f64;
        for e in [DqVoltage::new(1.0, 0.0), DqVoltage::new(0.0, 1.0)] {
            let abc = inverse_park_clarke(theta, e, params);
            let back = park_clarke(theta, AbcTriple::new(abc.a, abc.b, abc.c), params);
            worst = worst.max((back.i_d - e.v_d).abs()).max((back.i_q - e.v_q).abs());
        }
    }
    Check::new("transform round trip", worst, 1e-12)
}

fn column_fd(f: impl Fn(DqState) -> Vec2, i: DqState, eps: f64) -> Mat2 {
    let mut m = Mat2::zeros();
    for c in 0..2 {
        let (mut plus, mut minus) = (i, i);
        if c == 0 {
            plus.i_d += eps;
            minus.i_d -= eps;
        } else {
            plus.i_q += eps;
            minus.i_q -= eps;
        }
        m.set_column(c, &((f(plus) - f(minus)) / (2.0 * eps)));
    }
    m
}

fn jacobians(params: &MachineParams) -> Vec<Check> {
    let (mut worst_a, mut worst_phi, mut worst_h) = (0.0f64, 0.0f64, 0.0f64);
    let l_inv = params.inductance_inv();
    for (i, omega) in grid_states() {
        let Ok(terms) = compute_terms(i, omega, params) else {
            continue;
        };
        let u = terms.phi + 0.3 * terms.b_norm() * 48.0;
        let z = Vec2::new(-terms.b[1], terms.b[0]) * 0.1;
        let f = |x: DqState| -> Vec2 {
            let t = compute_terms(x, omega, params).expect("non-degenerate");
            l_inv * (t.torque_direction() * (u - t.phi) + h_vector(x, omega, params) + z)
        };
        let fd = -column_fd(f, i, 1e-6);
        let m = costate_matrices(i, omega, u, &terms, params).expect("non-degenerate");
        worst_a = worst_a.max((m.a - fd).norm() / fd.norm());
        let g = column_fd(|x| Vec2::new(phi(x, omega, params), 0.0), i, 1e-5);
        let dphi = Vec2::new(g[(0, 0)], g[(0, 1)]);
        worst_phi = worst_phi.max((m.dphi_di - dphi).norm() / dphi.norm().max(1.0));
        let hj = column_fd(|x| h_vector(x, omega, params), i, 1e-5);
        worst_h = worst_h.max((m.dh_di - hj).norm() / hj.norm());
    }
    vec![
        Check::new("costate matrix A vs finite differences", worst_a, 1e-5),
        Check::new("dphi/di vs finite differences", worst_phi, 1e-6),
        Check::new("dh/di vs finite differences", worst_h, 1e-6),
    ]
}

fn minimum_principle(params: &MachineParams) -> Check {
    let v_max = 48.0;
    let mut worst: f64 = 0.0;
    for (i, omega) in grid_states() {
        let Ok(terms) = compute_terms(i, omega, params) else {
            continue;
        };
        let (lo, hi) = crate::optimizer::torque_bounds(&terms, v_max);
        let u = lo + 0.37 * (hi - lo);
        let z_max = z_limit(u, &terms, v_max).expect("u within band");
        let m = costate_matrices(i, omega, u, &terms, params).expect("non-degenerate");
        let Ok(lam) = estimate_costate(i, &m.a, 1e-3) else {
            continue;
        };
        let b_proj = projection(terms.b).expect("non-degenerate");
        let (z, _) = optimal_z(&lam, &b_proj, &params.inductance_inv(), z_max);
        let h_opt = hamiltonian(i, &lam, u, z, &terms, omega, params).expect("non-degenerate");
        let n = Vec2::new(-terms.b[1], terms.b[0]) / terms.b_norm();
        let mut best = f64::INFINITY;
        for k in 0..=2000 {
            let s = z_max * (-1.0 + k as f64 / 1000.0);
            best = best.min(hamiltonian(i, &lam, u, n * s, &terms, omega, params).expect("non-degenerate"));
        }
        worst = worst.max((h_opt - best) / best.abs().max(1.0));
    }
    Check::new("minimum principle vs sweep", worst, 1e-6)
}

fn scenario_frames() -> Check {
    let mut s = Scenario::standard_mixed();
    s.duration = 0.05;
    s.dt_plant = 1e-5;
    match run_scenario(&s, ControllerKind::Oflc) {
        Ok(r) => {
            let bad: Vec<String> = r
                .frames
                .iter()
                .flat_map(|f| frame_violations(f, &s.params, s.v_max))
                .collect();
            Check {
                name: "frame invariants on a mixed scenario",
                passed: bad.is_empty(),
                detail: bad
                    .first()
                    .cloned()
                    .unwrap_or_else(|| format!("{} frames clean", r.frames.len())),
            }
        }
        Err(abort) => Check {
            name: "frame invariants on a mixed scenario",
            passed: false,
            detail: abort.to_string(),
        },
    }
}

/// Runs the built-in invariant suite on the reference machine.
pub fn selftest() -> Vec<Check> {
    let params = MachineParams::reference();
    let mut checks = vec![transform_round_trip(&params)];
    checks.extend(jacobians(&params));
    checks.push(minimum_principle(&params));
    checks.push(scenario_frames());
    checks
}
