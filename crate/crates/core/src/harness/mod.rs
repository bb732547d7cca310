//! Experiment harness: data I/O, simulation sweeps and reporting.

pub mod data;
pub mod graph_io;
pub mod report;
pub mod simulation;

pub use data::{load_csv, read_csv, standardize};
pub use graph_io::{degree_summary, export_dot, parse_dot_edges, render_dot, DegreeSummary, DotEdge};
pub use report::{emit_results, write_results_csv, write_weights_csv};
pub use simulation::{
    run_replication, run_simulation, run_weight_consistency, ExperimentConfig, Method, ReplicationFailure,
    ReplicationOutcome, RunRecord, SweepResult, WeightSummary,
};
