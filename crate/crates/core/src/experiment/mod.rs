//! Benchmark orchestration: config, per-cell runs, reference values, traces
//! and summaries.
//!
//! Every trace is a CSV file whose first line is a `#` schema comment,
//!
//! ```text
//! # saga-run-v1 algorithm=reg-saga label=reg-saga-theory seed=3 n=5000 f_hat=0.31
//! t,ifo_calls,f,grad_norm_sq,eta_t,wall_ns
//! ```
//!
//! Metrics are evaluated outside the IFO counter, so recording does not move
//! the IFO axis.

mod config;
mod reference;
mod runner;
mod summary;

pub use config::{
    Algorithm, BuiltProblem, ExperimentConfig, InitMode, ProblemSpec, ReferenceSpec, RunSpec,
    StepPolicy,
};
pub use reference::{reference_solution, ReferenceSolution, RestartOutcome};
pub use runner::{
    cells, config_digest, run_cell, run_experiment, write_trace, Cell, CellResult,
    ExperimentOutput, GridChoice, Manifest, ManifestRun, RunStatus,
};
pub use summary::{
    read_trace, summarize, summarize_files, Summary, SummaryRow, Trace, TraceHeader,
};

use serde::{Deserialize, Serialize};

/// Trace schema tag; readers reject anything else.
pub const SCHEMA: &str = "saga-run-v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: u64,
    pub ifo_calls: u64,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub eta_t: f64,
    pub wall_ns: u64,
}
