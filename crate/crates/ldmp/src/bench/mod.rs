//! Benchmark harness behind the `ldmp-bench` binary: manifests, the
//! verification suite, cost-table generation, sequential-vs-parallel
//! timing, and end-to-end forward runs.

pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod timing;
pub mod verify;

pub use manifest::{InputPaths, ResolvedInputs, RunManifest};
pub use pipeline::{run_forward, run_resolved, write_outputs, PipelineWeights, RunOutputs};
pub use report::{build_cost_table, CostRow, CostTable, Source};
pub use timing::{run_timing, TimingReport, TimingStats};
pub use verify::{run_verify, CheckResult, FaultInjection, VerifyReport};
