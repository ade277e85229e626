//! Scenario files, experiment runners and CSV output for the multi-lane traffic
//! toolkit. The `multilane` binary wraps [`runs::run`].

pub mod config;
pub mod output;
pub mod runs;

pub use config::{parse_config, ConfigError, Experiment, ScenarioConfig};
pub use runs::{run, RunError, RunOutput, RunReport};
