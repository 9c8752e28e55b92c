//! Problem instances, state spaces, the controlled transition kernel and the
//! per-slot risk cost.
//!
//! Clients are numbered `1..=N` everywhere in the public API ([`Client`]).
//! States of the clipped process live in `∏{0..τ_n}` and are addressed by a
//! dense mixed-radix index ([`StateIndexer`]); the unclipped process uses
//! [`UnboundedState`].

mod instance;
mod kernel;
mod state;

pub use instance::{AsymptoticInstance, Client, Instance, InstanceSpec};
pub use kernel::Kernel;
pub use state::{
    exceedances, slot_cost, step_distribution, State, StateIndexer, StepDistribution,
    UnboundedState,
};
