//! Reproducible experiment pipelines and their machine-readable reports.
//!
//! Every run is a pure function of its [`ExperimentConfig`]: sample `i`
//! draws its field, probe centers and walkers from seeds derived from
//! `(seed, i)`, samples run in parallel, and their curves are reduced in
//! sample order.

mod config;
mod pipeline;
mod report;

pub use config::{
    Averaging, Backend, ExperimentConfig, ExperimentKind, FitConfig, FractalConfig, FractalKind, RadialGrid, TimeGrid,
};
pub use pipeline::{classical_check, measure, run, torus_log_constant};
pub use report::{
    emit_report, read_summary, to_json, CorrectedExponent, ExperimentReport, GateResult, RunMetrics, Singularity,
    METRICS_FILE, SERIES_FILE, SLOPES_FILE, SUMMARY_FILE,
};
