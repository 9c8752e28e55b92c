//! High-reliability regime `p_n = 1 − b_n ε`, `ε → 0`.
//!
//! Two clients: the MLG rule, closed-form leading costs, a lower bound on the
//! optimum and the conditions under which MLG attains it. `N` clients: the
//! level-set construction and the SN policy derived from it.

mod level_sets;
mod mlg;

pub use level_sets::{all_success_excess, build_level_sets, sn_policy, LevelSets};
pub use mlg::{
    mlg_cost_leading, mlg_cycle_analytics, mlg_decide, mlg_optimality_check, mlg_policy,
    optimal_cost_lower_bound, AsymptoticCost, CycleAnalytics, DeltaCase, OptimalityCheck,
    OptimalityCondition, TwoClientConfig,
};
