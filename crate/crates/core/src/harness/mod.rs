//! Experiment configuration and orchestration behind the `homogenize` CLI.

mod config;
mod run;

pub use config::{validate_config, ExperimentConfig, FieldSpec, CONFIG_SCHEMA_VERSION};
pub use run::{
    run, write_outputs, FieldSummary, LegFailure, RateFit, RateStatus, RunSummary,
    ERRORS_CSV_HEADER,
};
