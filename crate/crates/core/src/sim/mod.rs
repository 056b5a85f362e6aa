//! Scenario generation, the discrete-event simulator and result reports.

mod config;
mod engine;
mod generate;
mod report;

pub use config::{ExperimentConfig, ScenarioConfig};
pub use engine::{run_simulation, simulate, Event, EventKind, EventQueue, SimOutcome, AUDIT_INTERVAL};
pub use generate::{generate_requests, generate_substrate};
pub use report::{align, report_files, write_report, Report};
