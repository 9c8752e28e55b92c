//! Risk-sensitive scheduling of packet deliveries to clients with
//! inter-delivery time thresholds.
//!
//! The crate covers:
//! - the controlled Markov model ([`model`]),
//! - exact evaluation and optimisation of stationary policies ([`exact`]),
//! - closed-form high-reliability approximations and the policies built
//!   from them ([`asymptotic`]),
//! - baseline schedulers ([`heuristics`]),
//! - Monte Carlo estimation ([`sim`]),
//! - configuration-driven sweeps ([`experiment`]).
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below name the common instantiations.

// Validation uses `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod heuristics;
pub mod model;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use model::{AsymptoticInstance, Client, Instance, InstanceSpec, State, UnboundedState};
pub use exact::{SolveReport, StationaryPolicy};
pub use experiment::ExperimentConfig;
pub use scalar::Real;
pub use sim::{PolicyHandle, SimConfig};

pub type Instance64 = Instance<f64>;
pub type Instance32 = Instance<f32>;
pub type AsymptoticInstance64 = AsymptoticInstance<f64>;
pub type AsymptoticInstance32 = AsymptoticInstance<f32>;
pub type SolveReport64 = SolveReport<f64>;
pub type SolveReport32 = SolveReport<f32>;
pub type CostEstimate64 = sim::CostEstimate<f64>;
pub type CostEstimate32 = sim::CostEstimate<f32>;
