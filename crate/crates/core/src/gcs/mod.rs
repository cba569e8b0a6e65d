//! Ground-station back end: command workflows, telemetry snapshots and alerts.

pub mod station;
pub mod telemetry;
pub mod workflow;

pub use station::GroundStation;
pub use telemetry::{alerts, AgentTelemetry, Alert, AlertKind, Severity, TelemetrySnapshot};
pub use workflow::{CommandState, FailsafePolicy, GcsEvent, HighLevelCommand, Workflow, WorkflowEngine, WorkflowError, WorkflowState};
