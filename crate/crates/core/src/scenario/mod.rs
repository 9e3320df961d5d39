//! Scenario documents, the run loop and result files.

mod config;
mod output;
mod run;

pub use config::{
    apply_override, load_config, load_config_file, load_config_with_overrides, parse_document,
    AgentsSpec, CostRow, InitialSpec, IntegratorConfig, Lambda2Mode, OutputConfig, PotentialSpec,
    Scenario, ScenarioConfig, TriggerConfig, TriggerMode, TriggerRule,
};
pub use output::{
    events_csv, run_batch, summary_json, trajectory_csv, write_outputs, BatchOutcome, EVENTS_FILE,
    SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use run::{run, summarize, RunDiagnostics, RunFailure, RunResult, Simulator, Summary, TrajectorySample};
