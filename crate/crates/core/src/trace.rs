//! Trace CSV and summary documents.
//!
//! Trace layout: `#` comment lines describing the flags bitfield, then a
//! header row and one row per emitted control frame:
//!
//! `t,i_d,i_q,v_d,v_q,tau_ref,tau_est,u_raw,u_feasible,omega,z_d,z_q,lambda_d,lambda_q,p_copper_W,flags`
//!
//! Floats are written in Rust's shortest round-trip form, so re-parsing a
//! trace recovers the exact values.

use std::io::{self, Write};

use crate::optimizer::SaturationReport;
use crate::sim::{ControllerKind, RunResult};
use crate::torque_loop::ControlFrame;

pub const TRACE_COLUMNS: [&str; 16] = [
    "t",
    "i_d",
    "i_q",
    "v_d",
    "v_q",
    "tau_ref",
    "tau_est",
    "u_raw",
    "u_feasible",
    "omega",
    "z_d",
    "z_q",
    "lambda_d",
    "lambda_q",
    "p_copper_W",
    "flags",
];

pub fn write_trace<W: Write>(mut w: W, frames: &[ControlFrame], decimation: usize) -> io::Result<()> {
    let step = decimation.max(1);
    writeln!(
        w,
        "# flags: bit0 ({}) u clamped to feasible band; bit1 ({}) |z| at voltage budget; \
         bit2 ({}) z forced to zero; bit3 ({}) |b| below guard, previous voltage held; \
         bit4 ({}) costate system ill-conditioned, fallback used",
        SaturationReport::U_CLAMPED,
        SaturationReport::Z_AT_LIMIT,
        SaturationReport::Z_ZEROED,
        SaturationReport::B_DEGENERATE,
        SaturationReport::ILL_CONDITIONED
    )?;
    writeln!(w, "# units: s, A, V, N m, rad/s (electrical), W")?;
    writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
    for f in frames.iter().step_by(step) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.t,
            f.i_dq.i_d,
            f.i_dq.i_q,
            f.v_dq.v_d,
            f.v_dq.v_q,
            f.tau_ref,
            f.tau_est,
            f.u_raw,
            f.u_feasible,
            f.omega,
            f.z[0],
            f.z[1],
            f.lambda[0],
            f.lambda[1],
            f.p_copper,
            f.report.flags()
        )?;
    }
    w.flush()
}

fn summary_lines(r: &RunResult, prefix: &str) -> Vec<(String, String)> {
    let s = &r.saturation;
    let key = |k: &str| format!("{prefix}{k}");
    vec![
        (key("ticks"), s.ticks.to_string()),
        (key("cost_integral_A2s"), r.cost_integral.to_string()),
        (key("copper_energy_J"), r.copper_energy.to_string()),
        (key("rms_tracking_error_Nm"), r.rms_tracking_error.to_string()),
        (key("u_clamped_ticks"), s.u_clamped.to_string()),
        (key("z_at_limit_ticks"), s.z_at_limit.to_string()),
        (key("z_zeroed_ticks"), s.z_zeroed.to_string()),
        (key("b_degenerate_ticks"), s.b_degenerate.to_string()),
        (key("ill_conditioned_ticks"), s.ill_conditioned.to_string()),
    ]
}

pub fn write_summary<W: Write>(mut w: W, r: &RunResult) -> io::Result<()> {
    writeln!(w, "controller: {}", r.controller)?;
    for (k, v) in summary_lines(r, "") {
        writeln!(w, "{k}: {v}")?;
    }
    w.flush()
}

/// `cost(OFLC) / cost(FLC with z = 0)`, when both runs are present.
pub fn energy_saving_ratio(results: &[RunResult]) -> Option<f64> {
    let find = |k| results.iter().find(|r| r.controller == k);
    let oflc = find(ControllerKind::Oflc)?;
    let base = find(ControllerKind::FlcZ0)?;
    (base.cost_integral > 0.0).then(|| oflc.cost_integral / base.cost_integral)
}

pub fn write_comparison<W: Write>(mut w: W, results: &[RunResult]) -> io::Result<()> {
    let names: Vec<&str> = results.iter().map(|r| r.controller.name()).collect();
    writeln!(w, "controllers: {}", names.join(", "))?;
    for r in results {
        for (k, v) in summary_lines(r, &format!("{}.", r.controller)) {
            writeln!(w, "{k}: {v}")?;
        }
    }
    if let Some(ratio) = energy_saving_ratio(results) {
        writeln!(w, "energy_saving_ratio: {ratio}")?;
        writeln!(w, "energy_saving_percent: {}", 100.0 * (1.0 - ratio))?;
    }
    w.flush()
}

/// Parses a `key: value` summary document.
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
