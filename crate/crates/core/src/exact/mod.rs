//! Exact treatment of the clipped chain: finite-horizon recursions, policy
//! evaluation through the spectral radius of the disutility matrix, chain
//! structure, and optimal-policy search.

mod dp;
mod evaluate;
mod matrix;
mod policy;
mod search;
mod spectral;
mod structure;

pub use dp::{dp_mdp1, dp_mdp2, DpTable, Mdp1Solver};
pub use evaluate::{
    average_cost, average_cost_with, controller_average_cost, doeblin_hitting_times,
    non_ne_trivial_cost, theta_threshold, FiniteController, PolicyEvaluator, SolveReport,
    ThetaThreshold,
};
pub use matrix::{NonnegativeMatrix, SparseMatrix, SquareMatrix};
pub use policy::{disutility_matrix, is_ne, transition_matrix, PolicyDocument, StationaryPolicy};
pub use search::{
    exhaustive_optimal, growth_rate_optimal, policy_count, ExhaustiveOptions, GrowthRateOptions,
    GrowthRateResult,
};
pub use spectral::{spectral_radius, SpectralEstimate, SpectralOptions};
pub use structure::{communicating_structure, reachable_from, CommunicatingStructure};
