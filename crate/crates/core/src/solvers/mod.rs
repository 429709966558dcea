//! Greedy coordinate search over twin assignments, a dogleg trust-region
//! method for smooth objectives, and the Monte Carlo chance estimator both
//! rely on.

mod chance;
mod greedy;
mod trust_region;

pub use chance::{estimate_chance, ChanceEstimate};
pub use greedy::{greedy_solve, GreedyConfig, GreedyOutcome, GreedyStep};
pub use trust_region::{
    trust_region_solve, ObjectiveFn, SolveStep, SolveTrace, TrustRegionConfig, TrustRegionSolution,
};
