//! Monte Carlo experiment drivers, metrics and configuration.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, DEFAULT_G_STEP};
pub use experiment::{
    linear_fit, linearity_study, max_load_at_plr, paired_trial, run_comparison, run_experiment,
    write_csv, DecoderTag, ExperimentResult, ExperimentSpec, LinearFit, LinearityPoint, MaxLoad,
    MaxLoadFlag, MetricRow, CSV_HEADER,
};
