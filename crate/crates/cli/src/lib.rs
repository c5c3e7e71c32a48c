//! Experiment harness: runs replication and aggregation over `(n, m)` grids
//! with macro-replications, persists every cell, and writes reliability
//! reports.

pub mod config;
pub mod experiment;
pub mod record;
pub mod report;

pub use config::{ExperimentConfig, Flavor, RhoRule};
pub use experiment::{load_report, resume_aggregation, run_experiment, RunOutcome};
pub use report::{emit_plot_data, Report, ReportRow};
