//! Pool-level simulation of the reservation scheme.
//!
//! A pool opens every `T_R`. Each station with a pending report sends a poll
//! in its group's preallocated RS; the access point counts collided RSs,
//! compares the count with the threshold and lays out the common pool, group
//! by group, in preallocated-slot order.

mod experiment;
mod pool;
mod scenario;
mod stats;

pub use experiment::{HypothesisMix, PoolExperiment};
pub use pool::{
    AccessMode, Decision, FrameKind, FrameRecord, GroupAssignment, Pool, PoolOutcome, Resolution,
    SlotOutcome,
};
pub use scenario::{run_scenario, PoolSummary, ScenarioConfig};
pub use stats::{
    empirical_kc_distribution, GoodnessOfFit, Histogram, Hypothesis, KcHistogram, Moments, ScenarioStats, StatsSummary,
};
