//! Progressive G¹ to G² switching during chunked prefill.

mod exact;
mod greedy;
mod instance;
mod partition;
mod plan;
mod sim;

pub use exact::{
    brute_force_schedule, feasible, feasible_plan, BRUTE_MAX_BLOCKS, BRUTE_MAX_CHUNKS,
    FEASIBLE_MAX_BLOCKS, FEASIBLE_MAX_CHUNKS,
};
pub use greedy::{greedy_schedule, greedy_schedule_explained, GreedyDecision, GreedySchedule};
pub use instance::{BlockProfile, Graph, ScheduleInstance};
pub use partition::{reduce_partition, PartitionReduction};
pub use plan::{naive_async_plan, synchronous_plan, LoadIssue, SwitchPlan};
pub use sim::{
    simulate, simulate_trace, validate_trace, EventKind, LatencyReport, PipelineTrace, TraceEvent,
};
