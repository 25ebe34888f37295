//! Optimal feedback-linearization torque control for salient-pole
//! permanent-magnet synchronous machines.
//!
//! The controller maps a torque command `u` and an auxiliary input `z` onto dq
//! voltages so that torque obeys `tau + mu dtau/dt = u` exactly, while `z`,
//! constrained to the subspace that cannot affect torque, is chosen by a
//! minimum-principle rule to cut copper loss within the inverter voltage limit.
//!
//! Modules, bottom up:
//! - [`machine`]: machine constants, dq voltage equations, torque map, Park-Clarke pair
//! - [`linearize`]: `b`, `phi` and the linearizing voltage map
//! - [`optimizer`]: costate estimate, projection, voltage budget and optimal `z`
//! - [`torque_loop`]: PI loop and the per-tick pipeline
//! - [`sim`]: RK4 plant, scenarios, energy accounting
//! - [`config`], [`trace`]: scenario files, CSV traces and summaries

// NaN has to fail range checks, so they are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod config;
pub mod error;
pub mod linearize;
pub mod machine;
pub mod optimizer;
pub mod sim;
pub mod torque_loop;
pub mod trace;
pub mod verify;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use error::{Error, Result};
pub use linearize::{compute_terms, linearize, BVariant, LinearizationTerms};
pub use machine::{
    dq_dynamics, h_vector, inverse_park_clarke, park_clarke, torque, AbcTriple, DqState, DqVoltage, MachineParams,
};
pub use optimizer::{Costate, CostateMatrices, SaturationReport};
pub use sim::{run_scenario, ControllerKind, Profile, RunResult, Scenario, SpeedSource};
pub use torque_loop::{ControlFrame, Controller, ControllerConfig, PiGains, Sensors, ZChannel};
