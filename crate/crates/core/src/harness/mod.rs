//! Experiment plumbing: config files, ε sweeps, CSV tables and log-log slope fits.
//!
//! Config grammar: one `section.key = value` per line, lists as comma-separated values,
//! `#` to end of line is a comment. Sections are `instance`, `adversary`, `estimators`,
//! `sweep` and one per estimator (`gd`, `rgd`, `subset`, `sos`).

mod config;
mod stats;
mod sweep;

pub use config::{
    build_pair, AdversaryConfig, EstimatorConfig, ExperimentConfig, InstanceSource, REGISTERED_ESTIMATORS,
};
pub use stats::{fit_loglog, fit_slope, median, quartiles, SlopeFit};
pub use sweep::{
    adversary_seed, run_estimator, run_sweep, sample_seed, ResultRow, ResultTable, SummaryRow, RESULTS_HEADER,
};
