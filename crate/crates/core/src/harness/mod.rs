//! Scenarios, the simulation loop, presets and CSV output.

pub mod config;
pub mod metrics;
pub mod presets;
pub mod run;

pub use config::{ScenarioConfig, Schedule, Switch, TransponderConfig};
pub use metrics::{emit_csv, Aggregates, GatewayRow, MetricsLog, SeriesRow, StatusKind};
pub use run::{run_scenario, run_scenario_with, superframe_count};
