//! Flow arrivals and sizes: incast rounds on the dumbbell and CDF-driven
//! Poisson workloads on the leaf-spine.

mod cdf;
mod scenario;

pub use cdf::{CdfError, FlowSizeCdf, Workload};
pub use scenario::{
    classify_size, gen_incast_round, gen_poisson_flows, poisson_rate, schedule_hash, FlowSpec,
    IncastParams, Pattern, Scenario, ScenarioError, SizeClass, MEDIUM_MAX_BYTES, SMALL_MAX_BYTES,
};
