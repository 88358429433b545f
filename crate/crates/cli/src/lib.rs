//! Experiment runner for bi-directional graph filtering: config files,
//! presets, noise sweeps and the oracle suite.

pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod preset;

pub use config::{load_config, parse_config, ExperimentConfig, Task};
pub use error::CliError;
pub use experiment::{run_experiment, run_single, ExperimentReport, RunRecord};
pub use oracle::{oracle_check, oracle_check_with, OracleCheck};
