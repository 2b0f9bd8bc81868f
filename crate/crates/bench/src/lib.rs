//! Benchmark harness: run configs, regular-vs-speculative generation
//! reports, quality under a time budget, cost-model sweeps and ablations.

pub mod config;
pub mod generate;
pub mod models;
pub mod quality;
pub mod report;
pub mod selfcheck;
pub mod sweep;

pub use config::{Overrides, RunConfig};
pub use generate::{run_ablation, run_generate, AblationRow, GenerateOutcome};
pub use quality::{run_quality, toy_task_suite, Task, TaskFile};
pub use report::{LatencyReport, QualityReport, SequenceRecord, REPORT_SCHEMA};
pub use selfcheck::{run_selfcheck, CheckResult};
pub use sweep::{run_cost_sweep, CostRow, SweepSpec};
