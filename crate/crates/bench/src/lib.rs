//! Benchmark harness: seeded workloads over a sources x targets grid,
//! closed-loop timing against a deployment, per-cell reports, and
//! side-by-side comparison of two deployments.

pub mod compare;
pub mod host;
pub mod plot;
pub mod report;
pub mod run;
pub mod workload;

pub use compare::{compare_reports, Comparison, CompareError};
pub use report::{build_report, BenchReport, CellStats};
pub use run::{run_benchmark, BenchSample, Deployment, Outcome, RunError, RunOptions};
pub use workload::{generate_workload, load_graph, WorkItem, Workload, WorkloadError, WorkloadSpec};
