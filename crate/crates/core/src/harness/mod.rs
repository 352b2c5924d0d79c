//! Configuration, experiment orchestration and output files.
//!
//! An experiment is described by a TOML file (see [`config`]) and produces a
//! `manifest.json` plus CSV tables in an output directory. Every CSV row
//! carries the SHA-256 hash of the configuration and seed.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{default_scenario, load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use experiments::{
    compare_oracle, jump_limit_study, refocus_study, run_experiment, sweep_epsilon, uniformity_study, Outcome,
    RunContext, Scenario, SweepReport,
};
