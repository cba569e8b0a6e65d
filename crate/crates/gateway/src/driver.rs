//! Synchronous core of the gateway: steps the simulation, turns workflow and
//! alert changes into protocol messages and applies client commands.

use crate::protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};
use fwswarm_core::gcs::{Alert, AlertKind, CommandState, Workflow, WorkflowState};
use fwswarm_core::sim::{SimError, Simulation};
use std::collections::{BTreeMap, BTreeSet};

pub type SessionId = u64;

/// Who a message goes to.
#[derive(Debug, Clone, PartialEq)]
pub enum Route {
    All,
    Session(SessionId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Route,
    pub msg: ServerMessage,
}

fn all(msg: ServerMessage) -> Outgoing {
    Outgoing { to: Route::All, msg }
}

type EntryView = (CommandState, u32);

pub struct Driver {
    sim: Simulation,
    push_every: u64,
    seq: u64,
    alerts: Vec<(AlertKind, u8)>,
    seen: BTreeMap<u32, (WorkflowState, Vec<EntryView>)>,
    owners: BTreeMap<u32, SessionId>,
    /// Workflows paused because their session went away.
    orphaned: BTreeSet<u32>,
    finished_sent: bool,
}

impl Driver {
    /// `push_hz` is in simulated time and is rounded to whole low-level ticks.
    pub fn new(sim: Simulation, push_hz: f64) -> Self {
        let hz = f64::from(sim.config().rates.lowlevel_hz);
        let push_every = ((hz / push_hz.max(1e-6)).round() as u64).max(1);
        Self {
            sim,
            push_every,
            seq: 0,
            alerts: Vec::new(),
            seen: BTreeMap::new(),
            owners: BTreeMap::new(),
            orphaned: BTreeSet::new(),
            finished_sent: false,
        }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn into_sim(self) -> Simulation {
        self.sim
    }

    pub fn is_finished(&self) -> bool {
        self.sim.is_finished()
    }

    /// Sim seconds between two snapshot pushes.
    pub fn push_period(&self) -> f64 {
        self.push_every as f64 / f64::from(self.sim.config().rates.lowlevel_hz)
    }

    /// The current snapshot without advancing the push sequence.
    pub fn snapshot(&self) -> ServerMessage {
        ServerMessage::Snapshot {
            v: PROTOCOL_VERSION,
            seq: self.seq,
            snapshot: self.sim.snapshot(),
        }
    }

    /// One low-level tick. Emits status changes every tick and a snapshot
    /// with alert changes every push period.
    pub fn step(&mut self) -> Result<Vec<Outgoing>, SimError> {
        let mut out = Vec::new();
        if self.sim.is_finished() {
            if !self.finished_sent {
                self.finished_sent = true;
                self.sim.flush_log()?;
                out.extend(self.push());
            }
            return Ok(out);
        }
        self.sim.step()?;
        out.extend(self.status_changes(None));
        if self.sim.tick() % self.push_every == 0 {
            out.extend(self.push());
        }
        Ok(out)
    }

    fn push(&mut self) -> Vec<Outgoing> {
        self.seq += 1;
        let snap = self.sim.snapshot();
        let mut out = Vec::new();
        let now: Vec<(AlertKind, u8)> = snap.alerts.iter().map(|a| (a.kind, a.agent)).collect();
        for a in &snap.alerts {
            if !self.alerts.contains(&(a.kind, a.agent)) {
                out.push(all(alert(snap.time, true, a.clone())));
            }
        }
        for (kind, agent) in &self.alerts {
            if !now.contains(&(*kind, *agent)) {
                let cleared = Alert {
                    severity: fwswarm_core::gcs::Severity::Info,
                    kind: *kind,
                    agent: *agent,
                    value: 0.0,
                    threshold: 0.0,
                };
                out.push(all(alert(snap.time, false, cleared)));
            }
        }
        self.alerts = now;
        out.insert(
            0,
            all(ServerMessage::Snapshot {
                v: PROTOCOL_VERSION,
                seq: self.seq,
                snapshot: snap,
            }),
        );
        out
    }

    fn status_changes(&mut self, request: Option<(u32, Option<String>)>) -> Vec<Outgoing> {
        let time = self.sim.time();
        let mut out = Vec::new();
        for w in self.sim.ground_station().engine.workflows() {
            let view: Vec<EntryView> = w.entries.iter().map(|e| (e.state, e.attempts)).collect();
            let prev = self.seen.get(&w.id);
            for (i, e) in w.entries.iter().enumerate() {
                if prev.and_then(|p| p.1.get(i)) != Some(&(e.state, e.attempts)) {
                    out.push(all(ServerMessage::CommandStatus {
                        v: PROTOCOL_VERSION,
                        time,
                        workflow: w.id,
                        index: i,
                        command: e.command.name().to_string(),
                        state: e.state,
                        command_id: e.command_id,
                        attempts: e.attempts,
                        reason: e.reason.clone(),
                    }));
                }
            }
            let req = request.as_ref().filter(|(id, _)| *id == w.id).and_then(|(_, r)| r.clone());
            if prev.map(|p| p.0) != Some(w.state) {
                out.push(all(workflow_status(time, req, w)));
            }
            self.seen.insert(w.id, (w.state, view));
        }
        out
    }

    pub fn handle(&mut self, session: SessionId, msg: ClientMessage) -> Vec<Outgoing> {
        let ClientMessage::Command {
            request,
            commands,
            failsafe,
            ..
        } = msg;
        if self.sim.is_finished() {
            return vec![Outgoing {
                to: Route::Session(session),
                msg: ServerMessage::error(request, "simulation has finished"),
            }];
        }
        match self.sim.submit_workflow(commands, failsafe) {
            Ok(id) => {
                self.owners.insert(id, session);
                self.status_changes(Some((id, request)))
            }
            Err(e) => vec![Outgoing {
                to: Route::Session(session),
                msg: ServerMessage::error(request, e.to_string()),
            }],
        }
    }

    /// Pauses every unfinished workflow the session submitted.
    pub fn disconnect(&mut self, session: SessionId) -> Vec<Outgoing> {
        let owned: Vec<u32> = self.owners.iter().filter(|(_, s)| **s == session).map(|(w, _)| *w).collect();
        for w in owned {
            self.owners.remove(&w);
            if self.sim.pause_workflow(w).is_ok() && self.state(w) == Some(WorkflowState::Paused) {
                self.orphaned.insert(w);
            }
        }
        self.status_changes(None)
    }

    /// A new session adopts and resumes the workflows left paused by
    /// disconnected sessions, then receives the current snapshot.
    pub fn connect(&mut self, session: SessionId) -> Vec<Outgoing> {
        for w in std::mem::take(&mut self.orphaned) {
            if self.state(w) == Some(WorkflowState::Paused) && self.sim.resume_workflow(w).is_ok() {
                self.owners.insert(w, session);
            }
        }
        let mut out = vec![Outgoing {
            to: Route::Session(session),
            msg: self.snapshot(),
        }];
        out.extend(self.status_changes(None));
        out
    }

    fn state(&self, w: u32) -> Option<WorkflowState> {
        self.sim.ground_station().engine.workflow(w).map(|w| w.state)
    }
}

fn alert(time: f64, raised: bool, alert: Alert) -> ServerMessage {
    ServerMessage::Alert {
        v: PROTOCOL_VERSION,
        time,
        raised,
        alert,
    }
}

fn workflow_status(time: f64, request: Option<String>, w: &Workflow) -> ServerMessage {
    ServerMessage::WorkflowStatus {
        v: PROTOCOL_VERSION,
        time,
        request,
        workflow: w.id,
        state: w.state,
        commands: w.entries.iter().map(|e| e.state).collect(),
    }
}
