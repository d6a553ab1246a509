//! Scenario runner for the `rmw` command: strict JSON configs in, CSV tables
//! with provenance headers out.

pub mod config;
pub mod error;
pub mod scenarios;
pub mod table;

pub use config::{ScenarioConfig, ScenarioId};
pub use error::{CliError, CliResult};
pub use scenarios::run_scenario;
pub use table::{parse_csv, Cell, ParsedTable, ResultTable};
