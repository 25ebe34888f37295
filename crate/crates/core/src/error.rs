use thiserror::Error;

/// Errors raised by the controller math, the simulator and the config layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid machine parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("torque channel is uncontrollable: |b| = {norm:e} is below the guard")]
    DegenerateB { norm: f64 },

    #[error("z is not orthogonal to b: |b.z| = {dot:e} exceeds tolerance {limit:e}")]
    OrthogonalityViolation { dot: f64, limit: f64 },

    #[error("costate system is ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("voltage budget is negative ({discriminant:e}); torque command was not clamped")]
    NegativeDiscriminant { discriminant: f64 },

    #[error("step response is not first order: relative RMS residual {residual:e}")]
    PoorFit { residual: f64 },

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid value for `{field}`{}: {reason}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Validation {
        field: String,
        line: Option<usize>,
        reason: String,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            line: None,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
