//! Fixed-step simulation kernel. Each tick delivers frames, steps every
//! agent (optionally in parallel), runs the ground station, hands new frames
//! to the network and appends the tick's records to the run log.

use super::agent::{Agent, Shared, TickInput};
use super::commander::{Event, Mode};
use super::config::{FaultKind, ScenarioConfig, ScenarioError};
use super::metrics::MetricsReport;
use super::runlog::{Record, RunLog, RUNLOG_VERSION};
use super::targets::{target_at, TargetTruth};
use crate::airframe::splitmix64;
use crate::gcs::telemetry::{alerts, AgentTelemetry, MissionStatus, RunningMetrics, TelemetrySnapshot};
use crate::gcs::{FailsafePolicy, GroundStation, HighLevelCommand, WorkflowError};
use crate::geometry::Vec2;
use crate::planning::Role;
use crate::swarmnet::message::GCS_SYSID;
use crate::swarmnet::{CommCounters, NetError, Network};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("run log: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub digest: String,
    pub report: MetricsReport,
    /// Every record, when the log was built with [`RunLog::keeping`].
    pub records: Vec<Record>,
}

fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

pub struct Simulation {
    cfg: ScenarioConfig,
    shared: Shared,
    step_mode: StepMode,
    agents: Vec<Agent>,
    gcs: GroundStation,
    net: Network,
    log: RunLog,
    tick: u64,
    script_next: usize,
    faults_done: Vec<bool>,
    formation_error: BTreeMap<u8, f64>,
    last_mpe: Option<f64>,
    finished: bool,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, step_mode: StepMode) -> Result<Self, SimError> {
        Self::with_log(cfg, step_mode, RunLog::new())
    }

    pub fn with_log(cfg: ScenarioConfig, step_mode: StepMode, mut log: RunLog) -> Result<Self, SimError> {
        cfg.validate()?;
        let shared = Shared::from_config(&cfg);
        let mut sensitive = cfg.channels.sensitive;
        sensitive.seed = mix(cfg.seed, sensitive.seed);
        let mut insensitive = cfg.channels.insensitive;
        insensitive.seed = mix(cfg.seed, insensitive.seed ^ 0x5151);
        let nodes = std::iter::once(GCS_SYSID).chain(shared.roster.iter().copied());
        let net = Network::new(sensitive, insensitive, nodes)?;
        let mut wind = cfg.wind;
        wind.seed = mix(cfg.seed, wind.seed ^ 0x77);
        let mut fleet = cfg.fleet.clone();
        fleet.sort_by_key(|f| f.id);
        let agents = fleet
            .iter()
            .map(|f| Agent::new(f, &cfg, &shared, &wind, mix(cfg.seed, 0xA6E7_0000 + f.id as u64)))
            .collect();
        let gcs = GroundStation::new(&cfg.gcs, shared.roster.clone());
        log.append(Record::Header {
            version: RUNLOG_VERSION,
            scenario: Box::new(cfg.clone()),
        })?;
        Ok(Self {
            faults_done: vec![false; cfg.faults.len()],
            cfg,
            shared,
            step_mode,
            agents,
            gcs,
            net,
            log,
            tick: 0,
            script_next: 0,
            formation_error: BTreeMap::new(),
            last_mpe: None,
            finished: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.shared.rates.dt()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: u8) -> Option<&Agent> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok().map(|i| &self.agents[i])
    }

    pub fn ground_station(&self) -> &GroundStation {
        &self.gcs
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn flush_log(&mut self) -> Result<(), SimError> {
        Ok(self.log.flush()?)
    }

    /// Queues an operator workflow at the current time.
    pub fn submit_workflow(&mut self, commands: Vec<HighLevelCommand>, failsafe: FailsafePolicy) -> Result<u32, WorkflowError> {
        let now = self.time();
        self.gcs.engine.submit(commands, failsafe, now)
    }

    pub fn pause_workflow(&mut self, id: u32) -> Result<(), WorkflowError> {
        self.gcs.engine.pause(id)
    }

    pub fn resume_workflow(&mut self, id: u32) -> Result<(), WorkflowError> {
        self.gcs.engine.resume(id)
    }

    fn agent_index(&self, id: u8) -> Option<usize> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok()
    }

    fn apply_faults(&mut self, now: f64) -> io::Result<()> {
        for (i, f) in self.cfg.faults.clone().iter().enumerate() {
            if self.faults_done[i] || f.at > now {
                continue;
            }
            self.faults_done[i] = true;
            let Some(idx) = self.agent_index(f.agent) else {
                continue;
            };
            match f.kind {
                FaultKind::Kill => {
                    self.agents.remove(idx);
                    self.net.remove_node(f.agent);
                    self.formation_error.remove(&f.agent);
                    self.log.append(Record::Event {
                        t: now,
                        id: Some(f.agent),
                        name: "killed".into(),
                        detail: String::new(),
                    })?;
                }
                FaultKind::Fault => self.agents[idx].inject(Event::Fault, now),
            }
        }
        Ok(())
    }

    /// Advances one low-level tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.finished {
            return Ok(());
        }
        let now = self.time();
        let dt = self.shared.rates.dt();
        self.apply_faults(now)?;
        for d in self.net.deliver(now) {
            if d.to == GCS_SYSID {
                self.gcs.comm.accept(d);
            } else if let Some(i) = self.agent_index(d.to) {
                self.agents[i].comm.accept(d);
            }
        }
        while let Some(e) = self.cfg.script.get(self.script_next) {
            if e.at > now {
                break;
            }
            let (commands, failsafe) = (e.commands.clone(), e.failsafe);
            self.script_next += 1;
            if let Err(err) = self.gcs.engine.submit(commands, failsafe, now) {
                self.log.append(Record::Event {
                    t: now,
                    id: None,
                    name: "workflow_rejected".into(),
                    detail: err.to_string(),
                })?;
            }
        }
        let targets: Vec<TargetTruth> = self.cfg.targets.iter().map(|t| target_at(t, now)).collect();
        let input = TickInput {
            tick: self.tick,
            now,
            dt,
            targets: &targets,
        };
        let shared = &self.shared;
        match self.step_mode {
            StepMode::Sequential => self.agents.iter_mut().for_each(|a| a.step(shared, &input)),
            StepMode::Parallel => self.agents.par_iter_mut().for_each(|a| a.step(shared, &input)),
        }
        for i in 0..self.agents.len() {
            for r in self.agents[i].take_records() {
                self.log.append(r)?;
            }
        }
        for event in self.gcs.step(now) {
            self.log.append(Record::Gcs { t: now, event })?;
        }
        for o in self.gcs.comm.take_outgoing() {
            self.net.transmit(GCS_SYSID, o.dest, o.class, o.priority, o.bytes);
        }
        for a in &mut self.agents {
            for o in a.comm.take_outgoing() {
                self.net.transmit(a.id, o.dest, o.class, o.priority, o.bytes);
            }
        }
        let mut positions: BTreeMap<u8, Vec2> = self.agents.iter().map(|a| (a.id, a.state.position)).collect();
        positions.insert(GCS_SYSID, self.gcs.position);
        self.net.schedule(now, now + dt, &positions);
        self.update_formation_error();
        let rates = self.shared.rates;
        if self.tick % rates.divisor(rates.log_hz) == 0 {
            self.write_samples(now)?;
        }
        if self.tick % rates.lowlevel_hz as u64 == 0 {
            self.log.append(Record::Net {
                t: now,
                counters: self.net.counters(),
                pending: self.net.pending(),
                comm: self.comm_counters(),
            })?;
        }
        self.tick += 1;
        if self.time() >= self.cfg.duration - 1e-9 {
            self.finished = true;
            self.log.append(Record::End { t: self.time() })?;
        }
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        while !self.finished && self.time() < t - 1e-9 {
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        self.run_until(f64::INFINITY)
    }

    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        if !self.finished {
            self.finished = true;
            self.log.append(Record::End { t: self.time() })?;
        }
        self.log.flush()?;
        let digest = self.log.digest();
        Ok(RunOutput {
            report: self.log.metrics().report(digest.clone()),
            digest,
            records: self.log.take_kept(),
        })
    }

    fn comm_counters(&self) -> CommCounters {
        let mut c = self.gcs.comm.counters;
        for a in &self.agents {
            c.add(&a.comm.counters);
        }
        c
    }

    /// Desired formation position of an agent at the state it had this tick.
    pub fn desired_position(&self, a: &Agent) -> Option<Vec2> {
        if !matches!(a.mode(), Mode::Mission | Mode::Avoid) {
            return None;
        }
        let plan = a.plan()?;
        let state = a.sample.as_ref()?.state;
        match plan.role {
            Role::Follower => {
                let slot = plan.formation_slot?;
                let leader = self.agent(slot.leader_id)?.sample.as_ref()?.state;
                Some(slot.world_position(leader.position, leader.course))
            }
            Role::Leader if plan.formation_slot.is_none() => a.current_segment().map(|s| s.project(state.position)),
            _ => None,
        }
    }

    fn update_formation_error(&mut self) {
        let errors: Vec<(u8, Option<f64>)> = self
            .agents
            .iter()
            .map(|a| {
                let e = self
                    .desired_position(a)
                    .and_then(|d| a.sample.as_ref().map(|s| d.distance(s.state.position)));
                (a.id, e)
            })
            .collect();
        let mut sum = 0.0;
        let mut n = 0;
        for (id, e) in errors {
            match e {
                Some(e) => {
                    self.formation_error.insert(id, e);
                    sum += e;
                    n += 1;
                }
                None => {
                    self.formation_error.remove(&id);
                }
            }
        }
        self.last_mpe = (n > 0).then(|| sum / n as f64);
    }

    fn write_samples(&mut self, now: f64) -> io::Result<()> {
        let mut records = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let Some(s) = a.sample.as_ref() else {
                continue;
            };
            records.push(Record::Sample {
                t: now,
                id: a.id,
                mode: a.mode(),
                state: s.state,
                cmd: s.cmd,
                actuators: s.actuators.clone(),
                desired: self.desired_position(a),
                group: a.group(),
                role: a.role(),
                battery: a.battery,
            });
        }
        for r in records {
            self.log.append(r)?;
        }
        Ok(())
    }

    /// Ground-station view of the swarm, with alerts. It describes the same
    /// instant as the most recent tick's samples: the start of that tick.
    pub fn snapshot(&self) -> TelemetrySnapshot {
        let now = self.tick.saturating_sub(1) as f64 * self.shared.rates.dt();
        let agents: Vec<AgentTelemetry> = self
            .agents
            .iter()
            .map(|a| (a, a.sample.as_ref().map_or(a.state, |s| s.state)))
            .map(|(a, state)| AgentTelemetry {
                id: a.id,
                position: state.position,
                altitude: state.altitude,
                airspeed: state.airspeed,
                course: state.course,
                mode: a.mode(),
                battery: a.battery,
                link_age: self.gcs.link_age(a.id, now),
                group: a.group(),
                role: a.role(),
                formation_error: self.formation_error.get(&a.id).copied(),
            })
            .collect();
        let m = self.log.metrics();
        let metrics = RunningMetrics {
            mpe: self.last_mpe,
            ampe: m.ampe().value(),
            ampe_samples: m.ampe().samples(),
            launch_rate: m.launch_rate(),
            land_rate: m.land_rate(),
        };
        let latest = self.gcs.engine.workflows().last();
        TelemetrySnapshot {
            time: now,
            alerts: alerts(&agents, &metrics),
            agents,
            mission: MissionStatus {
                workflow: latest.map(|w| w.id),
                state: latest.map(|w| w.state),
                launched: m.launched(),
                landed: m.landed(),
            },
            metrics,
            net: self.net.counters(),
        }
    }
}

/// Runs a scenario to its duration.
pub fn run_scenario(cfg: ScenarioConfig, step_mode: StepMode, log: RunLog) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::with_log(cfg, step_mode, log)?;
    sim.run()?;
    sim.finish()
}
