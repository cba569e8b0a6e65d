//! Telemetry snapshots and the alert rules evaluated on them.

use crate::geometry::Vec2;
use crate::planning::Role;
use crate::sim::commander::Mode;
use crate::swarmnet::NetCounters;
use serde::{Deserialize, Serialize};

use super::workflow::WorkflowState;

pub const LINK_STALE_AFTER: f64 = 3.0;
pub const FORMATION_ERROR_FACTOR: f64 = 2.0;
pub const BATTERY_LOW: f64 = 0.2;
/// Formation samples needed before the running AMPE is trusted for alerts.
pub const MIN_AMPE_SAMPLES: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTelemetry {
    pub id: u8,
    pub position: Vec2,
    pub altitude: f64,
    pub airspeed: f64,
    pub course: f64,
    pub mode: Mode,
    /// Remaining fraction, 0..=1.
    pub battery: f64,
    /// Seconds since the ground station last heard the agent.
    pub link_age: f64,
    pub group: Option<u8>,
    pub role: Option<Role>,
    /// Distance from the desired formation position, when the agent has one.
    pub formation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionStatus {
    pub workflow: Option<u32>,
    pub state: Option<WorkflowState>,
    pub launched: usize,
    pub landed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningMetrics {
    pub mpe: Option<f64>,
    pub ampe: Option<f64>,
    pub ampe_samples: u64,
    pub launch_rate: Option<f64>,
    pub land_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    LinkStale,
    FormationError,
    Failsafe,
    BatteryLow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub severity: Severity,
    pub kind: AlertKind,
    pub agent: u8,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub time: f64,
    pub agents: Vec<AgentTelemetry>,
    pub mission: MissionStatus,
    pub metrics: RunningMetrics,
    pub net: NetCounters,
    pub alerts: Vec<Alert>,
}

/// Alerts for one snapshot, ordered by agent id and rule.
pub fn alerts(agents: &[AgentTelemetry], metrics: &RunningMetrics) -> Vec<Alert> {
    let mut out = Vec::new();
    let ampe = metrics.ampe.filter(|_| metrics.ampe_samples >= MIN_AMPE_SAMPLES);
    for a in agents {
        if a.link_age > LINK_STALE_AFTER {
            out.push(Alert {
                severity: Severity::Warning,
                kind: AlertKind::LinkStale,
                agent: a.id,
                value: a.link_age,
                threshold: LINK_STALE_AFTER,
            });
        }
        if let (Some(err), Some(ampe)) = (a.formation_error, ampe) {
            let limit = FORMATION_ERROR_FACTOR * ampe;
            if err > limit {
                out.push(Alert {
                    severity: Severity::Warning,
                    kind: AlertKind::FormationError,
                    agent: a.id,
                    value: err,
                    threshold: limit,
                });
            }
        }
        if a.mode == Mode::Failsafe {
            out.push(Alert {
                severity: Severity::Critical,
                kind: AlertKind::Failsafe,
                agent: a.id,
                value: 1.0,
                threshold: 1.0,
            });
        }
        if a.battery < BATTERY_LOW {
            out.push(Alert {
                severity: Severity::Warning,
                kind: AlertKind::BatteryLow,
                agent: a.id,
                value: a.battery,
                threshold: BATTERY_LOW,
            });
        }
    }
    out
}
