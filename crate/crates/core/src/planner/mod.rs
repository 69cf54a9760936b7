//! Sampling-based route planning with conflict-driven repair.

mod conflict;
mod env;
mod rope;
mod route;
mod tree;

pub use conflict::{dynamic_obstacles, entry_interval, find_conflicts, Conflict};
pub use env::{path_length, DynamicObstacle, Environment};
pub use rope::{max_opt_factor, rope_optimize};
pub use route::{estimate_timed_route, Route, SpeedSpec, TimedWaypoint};
pub use tree::{
    default_max_nodes, plan_candidate, Node, PlanTree, DEFAULT_GOAL_BIAS, DEFAULT_ITERATION_BUDGET,
    DEFAULT_MAX_NODES, FINE_STEP_MAX_NODES,
};
