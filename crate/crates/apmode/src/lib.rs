//! Experiment runner, file formats and command-line front end for
//! `apmode-core`.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod summary;

pub use cli::cli_main;
pub use config::{Calibration, Config, ConfigError, ExperimentConfig};
pub use experiment::{
    best_all_on_crlb, monotonic_seconds, run_algorithm, run_experiment, strongest_aps, AssignmentRecord, ExperimentError,
    ExperimentOutput, ResultRecord, TrialContext, TrialStatus,
};
pub use summary::{format_summary, summarize, Moments, SummaryError, SummaryRow};
