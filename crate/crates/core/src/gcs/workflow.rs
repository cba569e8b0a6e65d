//! Acknowledgment-gated command workflows with repeat-until-ACK dispatch.

use crate::geometry::{Polygon, Vec2};
use crate::planning::PatternName;
use crate::swarmnet::message::{Ack, AckStatus, CommandBody, CommandMsg, BROADCAST};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Gain names addressable by parameter commands, indexed by wire code.
pub const PARAM_NAMES: [&str; 9] = [
    "k_vf",
    "chi_inf",
    "k_s",
    "k_v",
    "k_c",
    "r_p",
    "vertical_band",
    "lookahead",
    "staleness",
];

/// Largest waypoint or vertex list a command frame can carry.
pub const MAX_COMMAND_POINTS: usize = 24;

pub fn param_code(name: &str) -> Option<u8> {
    PARAM_NAMES.iter().position(|n| *n == name).map(|i| i as u8)
}

fn default_speed() -> f64 {
    19.0
}

fn default_altitude() -> f64 {
    100.0
}

fn default_radius() -> f64 {
    100.0
}

/// Operator-level command catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HighLevelCommand {
    Launch {
        #[serde(default)]
        lead: f64,
        spacing: f64,
    },
    Formation {
        pattern: PatternName,
        waypoints: Vec<Vec2>,
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    SetPattern {
        pattern: PatternName,
    },
    Tracking {
        area: Polygon,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    Transit {
        waypoints: Vec<Vec2>,
        #[serde(default = "default_speed")]
        speed: f64,
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    Rtl,
    Land {
        #[serde(default)]
        lead: f64,
        spacing: f64,
    },
    SetParam {
        name: String,
        value: f64,
    },
}

impl HighLevelCommand {
    pub fn name(&self) -> &'static str {
        match self {
            HighLevelCommand::Launch { .. } => "launch",
            HighLevelCommand::Formation { .. } => "formation",
            HighLevelCommand::SetPattern { .. } => "set_pattern",
            HighLevelCommand::Tracking { .. } => "tracking",
            HighLevelCommand::Transit { .. } => "transit",
            HighLevelCommand::Rtl => "rtl",
            HighLevelCommand::Land { .. } => "land",
            HighLevelCommand::SetParam { .. } => "set_param",
        }
    }

    /// Whether the command starts a new mission and so consumes a mission id.
    pub fn is_mission(&self) -> bool {
        matches!(
            self,
            HighLevelCommand::Formation { .. } | HighLevelCommand::Tracking { .. } | HighLevelCommand::Transit { .. }
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let points = |p: &[Vec2], min: usize| {
            if p.len() < min || p.len() > MAX_COMMAND_POINTS {
                Err(format!("{}: needs {min} to {MAX_COMMAND_POINTS} points", self.name()))
            } else if p.iter().any(|v| !v.is_finite()) {
                Err(format!("{}: non-finite point", self.name()))
            } else {
                Ok(())
            }
        };
        match self {
            HighLevelCommand::Launch { lead, spacing } | HighLevelCommand::Land { lead, spacing } => {
                if !(lead.is_finite() && *lead >= 0.0 && positive(*spacing)) {
                    return Err(format!("{}: spacing must be positive and lead non-negative", self.name()));
                }
            }
            HighLevelCommand::Formation {
                waypoints, speed, altitude, ..
            }
            | HighLevelCommand::Transit {
                waypoints, speed, altitude,
            } => {
                points(waypoints, 2)?;
                if waypoints.windows(2).any(|w| w[0].distance(w[1]) < 1.0) {
                    return Err(format!("{}: repeated waypoint", self.name()));
                }
                if !(positive(*speed) && positive(*altitude)) {
                    return Err(format!("{}: speed and altitude must be positive", self.name()));
                }
            }
            HighLevelCommand::Tracking { area, radius, altitude } => {
                points(&area.vertices, 3)?;
                if !area.is_simple() || area.area() <= 0.0 {
                    return Err("tracking: area must be a simple polygon".into());
                }
                if !(positive(*radius) && positive(*altitude)) {
                    return Err("tracking: radius and altitude must be positive".into());
                }
            }
            HighLevelCommand::SetParam { name, value } => {
                if param_code(name).is_none() {
                    return Err(format!("set_param: unknown parameter {name:?}"));
                }
                if !value.is_finite() {
                    return Err("set_param: value must be finite".into());
                }
            }
            HighLevelCommand::SetPattern { .. } | HighLevelCommand::Rtl => {}
        }
        Ok(())
    }

    pub fn to_body(&self, mission_id: u16) -> CommandBody {
        let pts = |p: &[Vec2]| p.iter().map(|v| [v.x as f32, v.y as f32]).collect();
        match self {
            HighLevelCommand::Launch { lead, spacing } => CommandBody::Launch {
                lead: *lead as f32,
                spacing: *spacing as f32,
            },
            HighLevelCommand::Formation {
                pattern,
                waypoints,
                speed,
                altitude,
            } => CommandBody::Formation {
                mission_id,
                pattern: pattern.code(),
                speed: *speed as f32,
                altitude: *altitude as f32,
                waypoints: pts(waypoints),
            },
            HighLevelCommand::SetPattern { pattern } => CommandBody::SetPattern { pattern: pattern.code() },
            HighLevelCommand::Tracking { area, radius, altitude } => CommandBody::Tracking {
                mission_id,
                radius: *radius as f32,
                altitude: *altitude as f32,
                area: pts(&area.vertices),
            },
            HighLevelCommand::Transit {
                waypoints,
                speed,
                altitude,
            } => CommandBody::Transit {
                mission_id,
                speed: *speed as f32,
                altitude: *altitude as f32,
                waypoints: pts(waypoints),
            },
            HighLevelCommand::Rtl => CommandBody::Rtl,
            HighLevelCommand::Land { lead, spacing } => CommandBody::Land {
                lead: *lead as f32,
                spacing: *spacing as f32,
            },
            HighLevelCommand::SetParam { name, value } => CommandBody::SetParam {
                param: param_code(name).unwrap_or(u8::MAX),
                value: *value as f32,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailsafePolicy {
    #[default]
    AbortQueue,
    RtlAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandState {
    Pending,
    Sent,
    Acked,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowState {
    Queued,
    Running,
    Paused,
    Completed,
    Aborted,
}

impl WorkflowState {
    pub fn is_finished(self) -> bool {
        matches!(self, WorkflowState::Completed | WorkflowState::Aborted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub command: HighLevelCommand,
    pub state: CommandState,
    pub command_id: Option<u16>,
    pub attempts: u32,
    pub last_sent: f64,
    pub acked_by: BTreeSet<u8>,
    pub rejected_by: BTreeSet<u8>,
    pub reason: Option<String>,
    /// Position in ground-station dispatch order.
    pub dispatch_index: Option<usize>,
    #[serde(skip)]
    message: Option<CommandMsg>,
}

impl CommandEntry {
    fn new(command: HighLevelCommand) -> Self {
        Self {
            command,
            state: CommandState::Pending,
            command_id: None,
            attempts: 0,
            last_sent: f64::NEG_INFINITY,
            acked_by: BTreeSet::new(),
            rejected_by: BTreeSet::new(),
            reason: None,
            dispatch_index: None,
            message: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub id: u32,
    pub failsafe: FailsafePolicy,
    pub state: WorkflowState,
    pub entries: Vec<CommandEntry>,
    /// RTL broadcasts issued by the `rtl_all` policy.
    pub failsafe_entries: Vec<CommandEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GcsEvent {
    WorkflowSubmitted { workflow: u32, commands: usize, time: f64 },
    CommandSent { workflow: u32, index: usize, command_id: u16, attempt: u32, time: f64 },
    AckReceived { command_id: u16, from: u8, status: AckStatus, time: f64 },
    AckDropped { command_id: u16, from: u8, time: f64 },
    CommandAcked { workflow: u32, index: usize, command_id: u16, time: f64 },
    CommandFailed { workflow: u32, index: usize, command_id: u16, reason: String, time: f64 },
    FailsafeTriggered { workflow: u32, policy: FailsafePolicy, time: f64 },
    FailsafeSent { workflow: u32, command_id: u16, attempt: u32, time: f64 },
    WorkflowFinished { workflow: u32, state: WorkflowState, time: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WorkflowError {
    #[error("empty workflow")]
    Empty,
    #[error("command {index}: {reason}")]
    InvalidCommand { index: usize, reason: String },
    #[error("no workflow {0}")]
    Unknown(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub period: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            period: 2.0,
            max_attempts: 5,
        }
    }
}

/// The single ordered command queue of a ground station.
#[derive(Debug, Clone)]
pub struct WorkflowEngine {
    pub retry: RetryPolicy,
    /// `(dispatch index, rounds)`: ACKs for that command are discarded while
    /// its attempt count is at most `rounds`.
    pub ack_drops: Vec<(usize, u32)>,
    workflows: Vec<Workflow>,
    next_workflow: u32,
    next_command: u16,
    next_mission: u16,
    dispatched: usize,
    events: Vec<GcsEvent>,
}

impl WorkflowEngine {
    pub fn new(retry: RetryPolicy) -> Self {
        Self {
            retry,
            ack_drops: Vec::new(),
            workflows: Vec::new(),
            next_workflow: 1,
            next_command: 1,
            next_mission: 1,
            dispatched: 0,
            events: Vec::new(),
        }
    }

    pub fn workflows(&self) -> &[Workflow] {
        &self.workflows
    }

    pub fn workflow(&self, id: u32) -> Option<&Workflow> {
        self.workflows.iter().find(|w| w.id == id)
    }

    pub fn take_events(&mut self) -> Vec<GcsEvent> {
        std::mem::take(&mut self.events)
    }

    /// Unknown or malformed commands reject the whole submission.
    pub fn submit(&mut self, commands: Vec<HighLevelCommand>, failsafe: FailsafePolicy, now: f64) -> Result<u32, WorkflowError> {
        if commands.is_empty() {
            return Err(WorkflowError::Empty);
        }
        for (index, c) in commands.iter().enumerate() {
            c.validate().map_err(|reason| WorkflowError::InvalidCommand { index, reason })?;
        }
        let id = self.next_workflow;
        self.next_workflow += 1;
        self.events.push(GcsEvent::WorkflowSubmitted {
            workflow: id,
            commands: commands.len(),
            time: now,
        });
        self.workflows.push(Workflow {
            id,
            failsafe,
            state: WorkflowState::Queued,
            entries: commands.into_iter().map(CommandEntry::new).collect(),
            failsafe_entries: Vec::new(),
        });
        Ok(id)
    }

    pub fn pause(&mut self, id: u32) -> Result<(), WorkflowError> {
        let w = self.workflows.iter_mut().find(|w| w.id == id).ok_or(WorkflowError::Unknown(id))?;
        if !w.state.is_finished() {
            w.state = WorkflowState::Paused;
        }
        Ok(())
    }

    pub fn resume(&mut self, id: u32) -> Result<(), WorkflowError> {
        let w = self.workflows.iter_mut().find(|w| w.id == id).ok_or(WorkflowError::Unknown(id))?;
        if w.state == WorkflowState::Paused {
            w.state = if w.entries.iter().any(|e| e.state != CommandState::Pending) {
                WorkflowState::Running
            } else {
                WorkflowState::Queued
            };
        }
        Ok(())
    }

    fn alloc_command_id(&mut self) -> u16 {
        let id = self.next_command;
        self.next_command = self.next_command.wrapping_add(1).max(1);
        id
    }

    pub fn on_ack(&mut self, from: u8, ack: &Ack, now: f64) {
        self.events.push(GcsEvent::AckReceived {
            command_id: ack.command_id,
            from,
            status: ack.status,
            time: now,
        });
        let drops = self.ack_drops.clone();
        for w in &mut self.workflows {
            for e in w.entries.iter_mut().chain(w.failsafe_entries.iter_mut()) {
                if e.state != CommandState::Sent || e.command_id != Some(ack.command_id) {
                    continue;
                }
                let dropped = e
                    .dispatch_index
                    .is_some_and(|i| drops.iter().any(|(idx, rounds)| *idx == i && e.attempts <= *rounds));
                if dropped {
                    self.events.push(GcsEvent::AckDropped {
                        command_id: ack.command_id,
                        from,
                        time: now,
                    });
                    return;
                }
                match ack.status {
                    AckStatus::Accepted => {
                        e.acked_by.insert(from);
                    }
                    AckStatus::Rejected => {
                        e.rejected_by.insert(from);
                    }
                }
                return;
            }
        }
    }

    fn send(entry: &mut CommandEntry, now: f64, out: &mut Vec<CommandMsg>) {
        entry.attempts += 1;
        entry.last_sent = now;
        out.push(entry.message.clone().expect("sent entries carry their message"));
    }

    /// Advances retries and dispatch. `required` are the agents whose ACK
    /// completes a broadcast command; `ignore_rejects` are agents whose
    /// rejections do not fail it. Returns the frames to broadcast.
    pub fn tick(&mut self, now: f64, required: &BTreeSet<u8>, ignore_rejects: &BTreeSet<u8>) -> Vec<CommandMsg> {
        let mut out = Vec::new();
        let retry = self.retry;
        // Failsafe broadcasts run outside the gate.
        for w in &mut self.workflows {
            for e in &mut w.failsafe_entries {
                if e.state != CommandState::Sent {
                    continue;
                }
                if !required.is_empty() && required.is_subset(&e.acked_by) {
                    e.state = CommandState::Acked;
                } else if now - e.last_sent >= retry.period {
                    if e.attempts < retry.max_attempts {
                        Self::send(e, now, &mut out);
                        self.events.push(GcsEvent::FailsafeSent {
                            workflow: w.id,
                            command_id: e.command_id.unwrap_or(0),
                            attempt: e.attempts,
                            time: now,
                        });
                    } else {
                        e.state = CommandState::Failed;
                        e.reason = Some("no acknowledgment".into());
                    }
                }
            }
        }
        let Some(wi) = self.workflows.iter().position(|w| !w.state.is_finished()) else {
            return out;
        };
        if self.workflows[wi].state == WorkflowState::Queued {
            self.workflows[wi].state = WorkflowState::Running;
        }
        let paused = self.workflows[wi].state == WorkflowState::Paused;
        let wid = self.workflows[wi].id;
        let mut failure: Option<(usize, u16, String)> = None;
        if let Some(ei) = self.workflows[wi].entries.iter().position(|e| e.state == CommandState::Sent) {
            let e = &mut self.workflows[wi].entries[ei];
            let cid = e.command_id.expect("sent entries have ids");
            if let Some(id) = e.rejected_by.iter().find(|id| !ignore_rejects.contains(id)) {
                failure = Some((ei, cid, format!("rejected by agent {id}")));
            } else if !required.is_empty() && required.is_subset(&e.acked_by) {
                e.state = CommandState::Acked;
                self.events.push(GcsEvent::CommandAcked {
                    workflow: wid,
                    index: ei,
                    command_id: cid,
                    time: now,
                });
            } else if now - e.last_sent >= retry.period {
                if e.attempts < retry.max_attempts {
                    Self::send(e, now, &mut out);
                    self.events.push(GcsEvent::CommandSent {
                        workflow: wid,
                        index: ei,
                        command_id: cid,
                        attempt: e.attempts,
                        time: now,
                    });
                } else {
                    failure = Some((ei, cid, format!("no acknowledgment after {} attempts", e.attempts)));
                }
            }
        } else if !paused {
            if let Some(ei) = self.workflows[wi].entries.iter().position(|e| e.state == CommandState::Pending) {
                let mission_id = if self.workflows[wi].entries[ei].command.is_mission() {
                    let m = self.next_mission;
                    self.next_mission = self.next_mission.wrapping_add(1).max(1);
                    m
                } else {
                    0
                };
                let cid = self.alloc_command_id();
                let index = self.dispatched;
                self.dispatched += 1;
                let e = &mut self.workflows[wi].entries[ei];
                e.state = CommandState::Sent;
                e.command_id = Some(cid);
                e.dispatch_index = Some(index);
                e.message = Some(CommandMsg {
                    command_id: cid,
                    target: BROADCAST,
                    issued_ms: (now * 1000.0).round() as u32,
                    body: e.command.to_body(mission_id),
                });
                Self::send(e, now, &mut out);
                self.events.push(GcsEvent::CommandSent {
                    workflow: wid,
                    index: ei,
                    command_id: cid,
                    attempt: 1,
                    time: now,
                });
            } else {
                self.workflows[wi].state = WorkflowState::Completed;
                self.events.push(GcsEvent::WorkflowFinished {
                    workflow: wid,
                    state: WorkflowState::Completed,
                    time: now,
                });
            }
        }
        if let Some((ei, cid, reason)) = failure {
            self.fail(wi, ei, cid, reason, now, &mut out);
        }
        out
    }

    fn fail(&mut self, wi: usize, ei: usize, cid: u16, reason: String, now: f64, out: &mut Vec<CommandMsg>) {
        let policy = self.workflows[wi].failsafe;
        let wid = self.workflows[wi].id;
        {
            let w = &mut self.workflows[wi];
            w.entries[ei].state = CommandState::Failed;
            w.entries[ei].reason = Some(reason.clone());
            for e in w.entries.iter_mut().filter(|e| e.state == CommandState::Pending) {
                e.state = CommandState::Failed;
                e.reason = Some("aborted".into());
            }
            w.state = WorkflowState::Aborted;
        }
        self.events.push(GcsEvent::CommandFailed {
            workflow: wid,
            index: ei,
            command_id: cid,
            reason,
            time: now,
        });
        self.events.push(GcsEvent::FailsafeTriggered {
            workflow: wid,
            policy,
            time: now,
        });
        if policy == FailsafePolicy::RtlAll {
            let id = self.alloc_command_id();
            let mut e = CommandEntry::new(HighLevelCommand::Rtl);
            e.state = CommandState::Sent;
            e.command_id = Some(id);
            e.message = Some(CommandMsg {
                command_id: id,
                target: BROADCAST,
                issued_ms: (now * 1000.0).round() as u32,
                body: CommandBody::Rtl,
            });
            Self::send(&mut e, now, out);
            self.events.push(GcsEvent::FailsafeSent {
                workflow: wid,
                command_id: id,
                attempt: 1,
                time: now,
            });
            self.workflows[wi].failsafe_entries.push(e);
        }
        self.events.push(GcsEvent::WorkflowFinished {
            workflow: wid,
            state: WorkflowState::Aborted,
            time: now,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agents(ids: &[u8]) -> BTreeSet<u8> {
        ids.iter().copied().collect()
    }

    fn happy() -> Vec<HighLevelCommand> {
        vec![
            HighLevelCommand::Launch { lead: 0.0, spacing: 5.0 },
            HighLevelCommand::SetPattern {
                pattern: PatternName::Vee,
            },
            HighLevelCommand::Land { lead: 0.0, spacing: 20.0 },
        ]
    }

    fn accept(id: u16) -> Ack {
        Ack {
            command_id: id,
            status: AckStatus::Accepted,
        }
    }

    /// Acks every frame from every agent, returning the dispatch order.
    fn drive(engine: &mut WorkflowEngine, all: &BTreeSet<u8>, until: f64) -> Vec<(f64, u16)> {
        let mut sent = Vec::new();
        let mut t = 0.0;
        while t <= until {
            for m in engine.tick(t, all, &BTreeSet::new()) {
                sent.push((t, m.command_id));
                for a in all {
                    engine.on_ack(*a, &accept(m.command_id), t + 0.1);
                }
            }
            t += 0.5;
        }
        sent
    }

    #[test]
    fn happy_path_dispatches_in_order() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        let id = e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let all = agents(&[1, 2, 3]);
        let sent = drive(&mut e, &all, 10.0);
        assert_eq!(sent.iter().map(|s| s.1).collect::<Vec<_>>(), vec![1, 2, 3]);
        let w = e.workflow(id).unwrap();
        assert_eq!(w.state, WorkflowState::Completed);
        assert!(w.entries.iter().all(|c| c.state == CommandState::Acked && c.attempts == 1));
    }

    #[test]
    fn four_dropped_ack_rounds_then_success() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.ack_drops.push((0, 4));
        e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let all = agents(&[1, 2]);
        let sent = drive(&mut e, &all, 20.0);
        let first: Vec<_> = sent.iter().filter(|s| s.1 == 1).collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        let w = &e.workflows()[0];
        assert_eq!(w.entries[0].state, CommandState::Acked);
        assert_eq!(w.state, WorkflowState::Completed);
        let acked = e
            .take_events()
            .iter()
            .filter(|ev| matches!(ev, GcsEvent::CommandAcked { index: 0, .. }))
            .count();
        assert_eq!(acked, 1);
    }

    #[test]
    fn five_failures_trigger_rtl_all() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.ack_drops.push((0, 5));
        e.submit(happy(), FailsafePolicy::RtlAll, 0.0).unwrap();
        let all = agents(&[1, 2]);
        let sent = drive(&mut e, &all, 12.0);
        let w = &e.workflows()[0];
        assert_eq!(w.state, WorkflowState::Aborted);
        assert_eq!(w.entries[0].state, CommandState::Failed);
        assert!(w.entries[1..].iter().all(|c| c.reason.as_deref() == Some("aborted")));
        assert_eq!(w.failsafe_entries.len(), 1);
        assert_eq!(w.failsafe_entries[0].state, CommandState::Acked);
        assert_eq!(sent.last().unwrap(), &(10.0, 2));
        assert!(sent.iter().all(|s| s.1 != 3), "no later workflow command may go out");
    }

    #[test]
    fn abort_queue_sends_nothing_more() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.ack_drops.push((0, 5));
        e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let sent = drive(&mut e, &agents(&[1]), 30.0);
        assert_eq!(sent.len(), 5);
        assert!(e.workflows()[0].failsafe_entries.is_empty());
    }

    #[test]
    fn rejection_fails_the_command() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let all = agents(&[1, 2]);
        let m = e.tick(0.0, &all, &BTreeSet::new());
        e.on_ack(1, &accept(m[0].command_id), 0.1);
        e.on_ack(
            2,
            &Ack {
                command_id: m[0].command_id,
                status: AckStatus::Rejected,
            },
            0.1,
        );
        e.tick(0.5, &all, &BTreeSet::new());
        let w = &e.workflows()[0];
        assert_eq!(w.entries[0].reason.as_deref(), Some("rejected by agent 2"));
        assert_eq!(w.state, WorkflowState::Aborted);
    }

    #[test]
    fn duplicate_acks_do_not_double_advance() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let all = agents(&[1]);
        let m = e.tick(0.0, &all, &BTreeSet::new());
        for _ in 0..5 {
            e.on_ack(1, &accept(m[0].command_id), 0.1);
        }
        let next = e.tick(0.5, &all, &BTreeSet::new());
        assert!(next.is_empty());
        let next = e.tick(1.0, &all, &BTreeSet::new());
        assert_eq!(next.len(), 1);
        for _ in 0..3 {
            e.on_ack(1, &accept(m[0].command_id), 1.1);
        }
        e.tick(1.5, &all, &BTreeSet::new());
        assert_eq!(e.workflows()[0].entries[2].state, CommandState::Pending);
    }

    #[test]
    fn unknown_parameter_is_rejected_before_queueing() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        let bad = vec![HighLevelCommand::SetParam {
            name: "warp".into(),
            value: 1.0,
        }];
        assert!(matches!(e.submit(bad, FailsafePolicy::AbortQueue, 0.0), Err(WorkflowError::InvalidCommand { index: 0, .. })));
        assert!(e.workflows().is_empty());
        let unknown = serde_json::from_str::<HighLevelCommand>(r#"{"kind":"barrel_roll"}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn paused_workflow_holds_the_queue() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        let id = e.submit(happy(), FailsafePolicy::AbortQueue, 0.0).unwrap();
        let all = agents(&[1]);
        let m = e.tick(0.0, &all, &BTreeSet::new());
        e.pause(id).unwrap();
        e.on_ack(1, &accept(m[0].command_id), 0.1);
        e.tick(0.5, &all, &BTreeSet::new());
        assert!(e.tick(1.0, &all, &BTreeSet::new()).is_empty());
        e.resume(id).unwrap();
        assert_eq!(e.tick(1.5, &all, &BTreeSet::new()).len(), 1);
    }

    #[test]
    fn mission_ids_only_for_missions() {
        let mut e = WorkflowEngine::new(RetryPolicy::default());
        e.submit(
            vec![
                HighLevelCommand::Rtl,
                HighLevelCommand::Formation {
                    pattern: PatternName::Line,
                    waypoints: vec![Vec2::ZERO, Vec2::new(100.0, 0.0)],
                    speed: 19.0,
                    altitude: 100.0,
                },
            ],
            FailsafePolicy::AbortQueue,
            0.0,
        )
        .unwrap();
        let all = agents(&[1]);
        let mut bodies = Vec::new();
        let mut t = 0.0;
        while bodies.len() < 2 {
            for m in e.tick(t, &all, &BTreeSet::new()) {
                e.on_ack(1, &accept(m.command_id), t);
                bodies.push(m.body);
            }
            t += 0.5;
        }
        assert_eq!(bodies[0], CommandBody::Rtl);
        assert!(matches!(bodies[1], CommandBody::Formation { mission_id: 1, .. }));
    }
}
