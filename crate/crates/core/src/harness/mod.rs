//! Seeded Monte-Carlo benchmark of the filter roster.
//!
//! Each run draws a source geometry, MVAR source activity, correlated
//! interferers, background activity and sensor noise, mixes them through
//! the true leadfields and rebuilds the sources with filters computed from
//! perturbed leadfields. Every trial has a baseline half (background and
//! sensor noise only, used for `N̂`) and an active half (all signals, used
//! for `R̂` and for scoring).

mod config;
mod report;
mod run;
mod snr;

use thiserror::Error;

pub use config::{ExperimentConfig, QSource, SnrParam, SnrPoint, SCHEMA_VERSION};
pub use report::{
    aggregate, config_echo, results_csv, run_to_dir, strip_timing, summary_csv, write_outputs, Stats, SummaryRow,
    CONFIG_ECHO_FILE, RESULTS_FILE, RESULTS_HEADER, SUMMARY_FILE, SUMMARY_HEADER,
};
pub use run::{run_experiment, run_experiment_with_jobs, run_seed, simulate_run, source_activity, FilterOutcome, RunResult};
pub use snr::{mean_power, scale_to_snr, snr_gain};

use crate::forward::ForwardError;
use crate::model::ModelError;
use crate::mvar::MvarError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("no results to aggregate")]
    EmptyResults,

    #[error("reference signal has zero power")]
    ZeroPowerReference,

    #[error("signal to be scaled has zero power")]
    ZeroPowerSignal,

    #[error(transparent)]
    Forward(#[from] ForwardError),

    #[error(transparent)]
    Mvar(#[from] MvarError),

    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
