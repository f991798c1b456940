//! Library half of the `morphx` binary: config parsing and the three commands.

pub mod analyze;
pub mod config;
pub mod replay;
pub mod run;

pub use analyze::{cmd_analyze, Experiment};
pub use config::{parse as parse_config, ConfigError, ExperimentConfig};
pub use replay::{replay, Replay};
pub use run::{cmd_run, RunSummary, CONFIG_COPY};
