//! Per-flow records, FCT statistics, recovery classification and the
//! fluid throughput model.

mod fluid;
mod record;
mod recovery;
mod stats;

pub use fluid::{fluid_throughput, FluidError, FluidParams};
pub use record::{
    deadline_missed, read_flows, write_flows, FlowRecord, MetricsError, RunDataset, DEADLINE,
    FLOW_CSV_HEADER,
};
pub use recovery::{
    classify_episode, read_recovery, summarize_recovery, write_recovery, RecoveryEvent,
    RecoverySummary, RECOVERY_CSV_HEADER,
};
pub use stats::{
    ecdf, fct_cdf, fct_percentiles, fraction_at_least, group_means, mean, mean_fct_us,
    nearest_rank, Decile,
};
