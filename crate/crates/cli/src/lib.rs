//! Scenario runner: configuration, orchestration and reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, Scenario, ScenarioConfig};
pub use report::{Assertion, RunReport};
pub use run::{run, RunError};
