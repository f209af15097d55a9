//! Scenario files and the command runner behind the `rationalizer` binary.

pub mod run;
pub mod scenario;

pub use run::{run_scenario, Report, RunOptions};
pub use scenario::{load_scenario, parse_scenario, serialize_scenario, ErrorKind, Resolved, Scenario, ScenarioError};
