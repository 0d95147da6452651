//! Scenario files, result files and the command line.

mod cli;
mod config;
mod output;
mod validate;

pub use cli::{cli_dispatch, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
pub use config::{beta_db_for_rate, parse_config, parse_config_str, CONFIG_KEYS, RATE_TABLE};
pub use output::{
    emit_results, from_json, manifest_path, to_csv, to_json, Conventions, OutputFormat,
    ResultDocument, RunManifest, SweepSettings, CSV_HEADER,
};
pub use validate::{kinematic_mismatches, random_link, run_validation, Check};
