//! Synthetic workloads, the latency cost model, and experiment reports.

mod cost;
mod experiment;
mod metrics;
mod workload;

pub use cost::{simulated_latency, CostModel, VERIFY_COST_LEN1, VERIFY_COST_LEN32};
pub use experiment::{
    run_experiment, run_on_workload, ExperimentConfig, RunReport, TaskRow, Variant, VariantSummary,
};
pub use metrics::{levenshtein, levenshtein_norm, mean, median};
pub use workload::{
    generate_workload, planted_rates, PlantedSpan, SpanKind, Task, TaskTag, Workload, WorkloadSpec,
};
