//! File formats, configuration, reports and the command-line driver built on
//! `fenkf-core`.

pub mod cli;
pub mod config;
pub mod format;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod series_io;

pub use config::{parse_config, parse_seeds, ConfigError, Observe, RunSettings, TruthForcing};
pub use manifest::RunManifest;
pub use runner::{reproduce, run_experiment_parallel, run_seeds, Layout, RunError};
pub use series_io::{load_series, read_series, save_series, write_series, SeriesIoError};
