//! Software-in-the-loop simulation: scenarios, agents, the kernel and its run log.

pub mod agent;
pub mod commander;
pub mod config;
pub mod kernel;
pub mod metrics;
pub mod runlog;
pub mod scenarios;
pub mod sequencer;
pub mod targets;

pub use config::ScenarioConfig;
pub use kernel::{run_scenario, RunOutput, SimError, Simulation, StepMode};
pub use runlog::{replay, Record, RunLog};
