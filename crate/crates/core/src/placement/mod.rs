//! Sequential linear programming placement of synthetic inertia and damping.
//!
//! Each iteration evaluates the closed-loop metrics and their gain
//! sensitivities, linearises the weighted objective and the metric bounds
//! around the current gains, solves the resulting LP inside a per-parameter
//! trust region and keeps the step only if the re-evaluated objective
//! improves.

mod config;
mod lp;
mod metrics;
mod slp;

pub use config::{Bounds, Budget, CapabilityParams, Interval, Penalties, PlacementConfig, TrustRegion, Weights};
pub use lp::{solve_lp, Constraint, LinearProgram, LpSolution, Relation};
pub use metrics::{evaluate, Evaluator, MetricBundle, ModeDamping};
pub use slp::{
    build_lp, min_capacity_place, objective, place, place_from, required_capacities, Iteration, LpModel, MetricSummary,
    Objective, PlacementResult, Termination, BOUND_TOLERANCE,
};
