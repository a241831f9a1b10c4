//! Scenario runner for the `kostin` library: reads a scenario file, runs a
//! pipeline and writes CSV/JSON artifacts plus a validation report.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod report;

pub use config::{ConfigError, Format, Pipeline, ScenarioConfig, Vary};
pub use pipeline::run_scenario;
pub use report::{Report, Status};
