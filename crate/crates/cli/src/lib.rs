//! Scenario-driven experiments on periodic KPP spreading speeds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiments;
pub mod report;
pub mod scenario;

pub use experiments::{run_experiment, run_with_artifacts, Artifacts};
pub use report::{write_report, ExperimentReport, Verdict};
pub use scenario::{load_scenario, parse_scenario, Experiment, Format, Scenario};
