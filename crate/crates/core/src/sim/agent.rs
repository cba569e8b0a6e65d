//! One UAV: communication, coordination, planning, guidance and control
//! around its commander. Each tick follows observe, orient, decide, act.

use super::commander::{CommanderState, Event, Mode, Outcome};
use super::config::{CoordinationConfig, FleetEntry, LaunchConfig, Rates, ScenarioConfig, SensorConfig, StationGrid};
use super::runlog::Record;
use super::sequencer::{landing_slot, taxi_kinematics, taxi_time};
use super::targets::{detect_targets, TargetFusion, TargetTruth};
use crate::airframe::{step_dynamics, PlatformConfig, VehicleState, WindField};
use crate::coordination::mission::{decompose, group_route, transit_offset, TaskKind};
use crate::coordination::scheduler::{ScheduleEvent, ScheduledTask};
use crate::coordination::{allocate, form_groups, reassign_lost, resolve_conflict, Assignment, CoordinationGroup, Mission, MissionParams, Scheduler, Task};
use crate::gcs::workflow::PARAM_NAMES;
use crate::geometry::{Polygon, Vec2};
use crate::guidance::{extrapolate, Guidance, GuidanceCommand, GuidanceSource, OrbitDirection, PathSegment};
use crate::lowlevel::{allocate as allocate_effort, attitude_control, speed_height_control, ControlEffort, ControlTables, VirtualControls};
use crate::planning::formation::offset_route;
use crate::planning::{make_planner, PatternName, PlanRequest, Planner, ReplanTrigger, RequestSpec, Role, TaskPlan, TriggerKind};
use crate::swarmnet::message::{Ack, AckStatus, CommandBody, CommandMsg, Heartbeat, ImageryChunk, PlanProgress, BROADCAST, GCS_SYSID};
use crate::swarmnet::{CommManager, Destination, Received, SwarmMessage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Peers and leaders whose latest state is older than this are ignored, s.
const PEER_FRESH: f64 = 3.0;
/// Leader progress reports older than this drop out of the consensus, s.
const PROGRESS_FRESH: f64 = 3.0;
const MAX_STASHED: usize = 16;
const IMAGERY_EVERY: u64 = 20;
const IMAGERY_CHUNKS: u16 = 4;
const IMAGERY_CHUNK_LEN: usize = 200;
/// A fused target estimate older than this no longer drives standoff tracking, s.
const ESTIMATE_MAX_AGE: f64 = 60.0;

/// Scenario-wide parameters every agent reads.
#[derive(Debug, Clone)]
pub struct Shared {
    pub rates: Rates,
    pub launch: LaunchConfig,
    pub stations: StationGrid,
    pub coordination: CoordinationConfig,
    pub sensor: SensorConfig,
    pub comm_range: f64,
    pub roster: Vec<u8>,
}

impl Shared {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            rates: cfg.rates,
            launch: cfg.launch,
            stations: cfg.stations,
            coordination: cfg.coordination,
            sensor: cfg.sensor,
            comm_range: cfg.channels.sensitive.range,
            roster: cfg.roster(),
        }
    }

    pub fn rank(&self, id: u8) -> Option<usize> {
        self.roster.binary_search(&id).ok()
    }

    pub fn station(&self, id: u8) -> Option<Vec2> {
        self.rank(id).map(|r| self.stations.station(r, self.roster.len()))
    }
}

pub struct TickInput<'a> {
    pub tick: u64,
    pub now: f64,
    pub dt: f64,
    pub targets: &'a [TargetTruth],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerInfo {
    pub state: VehicleState,
    pub mode: Option<Mode>,
    pub group: Option<u8>,
    pub role: Option<Role>,
    pub battery: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LeaderProgress {
    mission_id: u16,
    progress: f64,
    time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LaunchPlan {
    issued: f64,
    received: f64,
    slot: f64,
    taxi_start: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Glide {
    from: Vec2,
    from_altitude: f64,
    start: f64,
    duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LandPlan {
    issued: f64,
    slot: f64,
    glide: Option<Glide>,
}

/// What the agent did on its last tick, as the run log records it.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSample {
    pub state: VehicleState,
    pub cmd: Option<GuidanceCommand>,
    pub actuators: Vec<f64>,
}

pub struct MissionState {
    pub mission: Mission,
    pub group: CoordinationGroup,
    pub tasks: Vec<Task>,
    pub assignment: Assignment,
    pub lost: BTreeSet<u8>,
    pub slot_order: Vec<u8>,
    pub my_task: Option<u8>,
    pub plan: Option<TaskPlan>,
    pub segment: usize,
    pub complete: bool,
    pub scheduler: Scheduler,
    /// Sim time the mission started here; silence of never-heard members counts from it.
    pub started: f64,
    planner: Box<dyn Planner>,
}

impl MissionState {
    pub fn task_set(&self) -> BTreeSet<u8> {
        self.tasks.iter().map(|t| t.index).collect()
    }

    pub fn alive_members(&self) -> Vec<u8> {
        self.group.members.iter().copied().filter(|m| !self.lost.contains(m)).collect()
    }

    pub fn role(&self) -> Option<Role> {
        self.plan.as_ref().map(|p| p.role)
    }

    fn segment_offset(&self) -> f64 {
        self.plan.as_ref().map_or(0.0, |p| p.segments[..self.segment].iter().map(|s| s.length()).sum())
    }
}

pub fn role_code(role: Option<Role>) -> u8 {
    match role {
        None => 0,
        Some(Role::Leader) => 1,
        Some(Role::Follower) => 2,
        Some(Role::Tracker) => 3,
        Some(Role::Transit) => 4,
    }
}

pub fn role_from_code(c: u8) -> Option<Role> {
    match c {
        1 => Some(Role::Leader),
        2 => Some(Role::Follower),
        3 => Some(Role::Tracker),
        4 => Some(Role::Transit),
        _ => None,
    }
}

fn points(v: &[[f32; 2]]) -> Vec<Vec2> {
    v.iter().map(|p| Vec2::new(p[0] as f64, p[1] as f64)).collect()
}

/// The mission carried by a mission command.
pub fn mission_from_command(c: &CommandMsg) -> Option<Mission> {
    let (mission_id, params) = match &c.body {
        CommandBody::Formation {
            mission_id,
            pattern,
            speed,
            altitude,
            waypoints,
        } => (
            *mission_id,
            MissionParams::FormationFlight {
                pattern: PatternName::from_code(*pattern)?,
                waypoints: points(waypoints),
                speed: *speed as f64,
                altitude: *altitude as f64,
            },
        ),
        CommandBody::Tracking {
            mission_id,
            radius,
            altitude,
            area,
        } => (
            *mission_id,
            MissionParams::TargetTracking {
                area: Polygon::new(points(area)),
                radius: *radius as f64,
                altitude: *altitude as f64,
                target_count: 1,
            },
        ),
        CommandBody::Transit {
            mission_id,
            speed,
            altitude,
            waypoints,
        } => (
            *mission_id,
            MissionParams::Transit {
                waypoints: points(waypoints),
                speed: *speed as f64,
                altitude: *altitude as f64,
            },
        ),
        _ => return None,
    };
    Some(Mission {
        mission_id,
        issued_by: GCS_SYSID,
        timestamp: c.issued_ms as f64 / 1000.0,
        params,
    })
}

pub struct Agent {
    pub id: u8,
    pub rank: usize,
    pub home: Vec2,
    pub station: Vec2,
    pub platform: PlatformConfig,
    pub guidance: Guidance,
    pub state: VehicleState,
    pub commander: CommanderState,
    pub comm: CommManager,
    pub battery: f64,
    pub peers: BTreeMap<u8, PeerInfo>,
    pub fusion: TargetFusion,
    pub mission: Option<MissionState>,
    /// Targets this agent saw on its last sensor pass.
    pub detecting: BTreeSet<u8>,
    pub cmd: Option<GuidanceCommand>,
    pub sample: Option<TickSample>,
    wind: WindField,
    rng: ChaCha8Rng,
    airborne_time: f64,
    battery_warned: bool,
    link_warned: bool,
    leader_progress: BTreeMap<u8, LeaderProgress>,
    launch: Option<LaunchPlan>,
    land: Option<LandPlan>,
    deferred: Option<Mission>,
    stashed: Vec<Assignment>,
    handled: BTreeMap<u16, AckStatus>,
    image_id: u16,
    records: Vec<Record>,
}

impl Agent {
    pub fn new(entry: &FleetEntry, cfg: &ScenarioConfig, shared: &Shared, wind: &WindField, seed: u64) -> Self {
        let platform = entry.platform.resolve().expect("validated platform");
        let rank = shared.rank(entry.id).expect("fleet member");
        let station = shared.station(entry.id).expect("fleet member");
        let mut commander = CommanderState::default();
        let state = if cfg.start_airborne {
            commander.mode = Mode::Mission;
            VehicleState::level(
                station + Vec2::new(shared.stations.radius, 0.0),
                shared.stations.altitude,
                platform.cruise_speed,
                std::f64::consts::FRAC_PI_2,
            )
        } else {
            VehicleState::level(entry.home, 0.0, 0.0, shared.launch.heading)
        };
        Self {
            id: entry.id,
            rank,
            home: entry.home,
            station,
            guidance: Guidance::new(&platform, cfg.gains),
            platform,
            state,
            commander,
            comm: CommManager::new(entry.id),
            battery: 1.0,
            peers: BTreeMap::new(),
            fusion: TargetFusion::new(shared.sensor.fusion_window, shared.sensor.noise_stddev),
            mission: None,
            detecting: BTreeSet::new(),
            cmd: None,
            sample: None,
            wind: wind.for_vehicle(entry.id as u64),
            rng: ChaCha8Rng::seed_from_u64(seed),
            airborne_time: 0.0,
            battery_warned: false,
            link_warned: false,
            leader_progress: BTreeMap::new(),
            launch: None,
            land: None,
            deferred: None,
            stashed: Vec::new(),
            handled: BTreeMap::new(),
            image_id: 0,
            records: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.commander.mode
    }

    pub fn group(&self) -> Option<u8> {
        self.mission.as_ref().map(|m| m.group.group_id)
    }

    pub fn role(&self) -> Option<Role> {
        self.mission.as_ref().and_then(|m| m.role())
    }

    pub fn plan(&self) -> Option<&TaskPlan> {
        self.mission.as_ref().and_then(|m| m.plan.as_ref())
    }

    /// Segment the agent is currently flying, if it holds a path task.
    pub fn current_segment(&self) -> Option<&PathSegment> {
        let m = self.mission.as_ref()?;
        m.plan.as_ref()?.segments.get(m.segment)
    }

    pub fn take_records(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.records)
    }

    fn event(&mut self, now: f64, name: &str, detail: String) {
        self.records.push(Record::Event {
            t: now,
            id: Some(self.id),
            name: name.to_string(),
            detail,
        });
    }

    fn send(&mut self, msg: SwarmMessage, dest: Destination, now: f64) {
        if let Err(e) = self.comm.send(&msg, dest) {
            self.event(now, "send_failed", e.to_string());
        }
    }

    /// Raises a commander event and applies entry actions of the new mode.
    fn fire(&mut self, event: Event, now: f64) -> bool {
        match self.commander.step(event) {
            Ok(Outcome::Transition { from, to }) => {
                self.records.push(Record::Transition {
                    t: now,
                    id: self.id,
                    from,
                    to,
                    event,
                });
                self.on_enter(to);
                true
            }
            Ok(Outcome::Accepted) => true,
            Err(r) => {
                self.records.push(Record::Rejection {
                    t: now,
                    id: self.id,
                    mode: r.mode,
                    event: r.event,
                });
                false
            }
        }
    }

    fn on_enter(&mut self, mode: Mode) {
        match mode {
            Mode::Rtl => {
                self.mission = None;
                self.deferred = None;
            }
            Mode::Failsafe => {
                self.mission = None;
                self.deferred = None;
                self.launch = None;
                self.land = None;
            }
            _ => {}
        }
    }

    /// External fault injection.
    pub fn inject(&mut self, event: Event, now: f64) {
        self.fire(event, now);
    }

    pub fn step(&mut self, sh: &Shared, inp: &TickInput) {
        let now = inp.now;
        self.state.timestamp = now;
        for r in self.comm.poll(now) {
            self.receive(sh, r, now);
        }
        self.fusion.update(now);
        self.lifecycle(sh, now);
        let id = self.id as u64;
        if (inp.tick + id) % sh.rates.divisor(sh.rates.coordination_hz) == 0 {
            self.coordinate(sh, inp);
        }
        let hb = sh.rates.divisor(sh.rates.heartbeat_hz);
        if inp.tick % hb == id % hb {
            self.heartbeat(now);
        }
        if inp.tick % sh.rates.divisor(sh.rates.guidance_hz) == 0 || self.cmd.is_none() {
            self.guide(sh, now);
        }
        self.act(sh, inp);
    }

    fn receive(&mut self, sh: &Shared, r: Received, now: f64) {
        match r.msg {
            SwarmMessage::Heartbeat(h) if r.from != GCS_SYSID => {
                let state = VehicleState {
                    position: Vec2::new(h.position[0] as f64, h.position[1] as f64),
                    altitude: h.altitude as f64,
                    airspeed: h.airspeed as f64,
                    course: h.course as f64,
                    roll: h.roll as f64,
                    pitch: h.pitch as f64,
                    timestamp: h.time_ms as f64 / 1000.0,
                };
                let fresher = self.peers.get(&r.from).is_none_or(|p| p.state.timestamp <= state.timestamp);
                if fresher {
                    self.peers.insert(
                        r.from,
                        PeerInfo {
                            state,
                            mode: Mode::from_code(h.mode),
                            group: (h.group != 0xFF).then_some(h.group),
                            role: role_from_code(h.role),
                            battery: h.battery as f64 / 200.0,
                        },
                    );
                }
            }
            SwarmMessage::Heartbeat(_) => {}
            SwarmMessage::PlanProgress(p) => {
                self.leader_progress.insert(
                    r.from,
                    LeaderProgress {
                        mission_id: p.mission_id,
                        progress: p.progress as f64,
                        time: p.time_ms as f64 / 1000.0,
                    },
                );
            }
            SwarmMessage::Assignment(m) => self.on_assignment(sh, Assignment::from_msg(&m), now),
            SwarmMessage::Command(c) => self.on_command(sh, &c, now),
            SwarmMessage::Detection(d) => self.fusion.report(r.from, &d),
            SwarmMessage::Ack(_) | SwarmMessage::ImageryChunk(_) => {}
        }
    }

    fn on_command(&mut self, sh: &Shared, c: &CommandMsg, now: f64) {
        if c.target != self.id && c.target != BROADCAST {
            return;
        }
        let status = match self.handled.get(&c.command_id) {
            Some(s) => *s,
            None => {
                let s = self.execute(sh, c, now);
                self.handled.insert(c.command_id, s);
                s
            }
        };
        self.send(
            SwarmMessage::Ack(Ack {
                command_id: c.command_id,
                status,
            }),
            Destination::Node(GCS_SYSID),
            now,
        );
    }

    fn reject(&mut self, event: Event, now: f64) -> AckStatus {
        self.records.push(Record::Rejection {
            t: now,
            id: self.id,
            mode: self.mode(),
            event,
        });
        AckStatus::Rejected
    }

    fn execute(&mut self, sh: &Shared, c: &CommandMsg, now: f64) -> AckStatus {
        let issued = c.issued_ms as f64 / 1000.0;
        let accepted = |ok: bool| if ok { AckStatus::Accepted } else { AckStatus::Rejected };
        match &c.body {
            CommandBody::Launch { lead, spacing } => {
                if self.mode() != Mode::Standby || self.launch.is_some() {
                    return self.reject(Event::LaunchCommand, now);
                }
                let slot = issued + *lead as f64 + self.rank as f64 * *spacing as f64;
                self.launch = Some(LaunchPlan {
                    issued,
                    received: now,
                    slot,
                    taxi_start: None,
                });
                AckStatus::Accepted
            }
            CommandBody::Formation { .. } | CommandBody::Tracking { .. } | CommandBody::Transit { .. } => {
                let Some(mission) = mission_from_command(c).filter(|m| m.validate().is_ok()) else {
                    return self.reject(Event::MissionCommand, now);
                };
                if self.mode() == Mode::Standby && self.launch.is_some() {
                    self.deferred = Some(mission);
                    return AckStatus::Accepted;
                }
                if !self.fire(Event::MissionCommand, now) {
                    return AckStatus::Rejected;
                }
                if matches!(self.mode(), Mode::Mission | Mode::Avoid) {
                    self.start_mission(sh, mission, now);
                } else {
                    self.deferred = Some(mission);
                }
                AckStatus::Accepted
            }
            CommandBody::SetPattern { pattern } => {
                let ok = PatternName::from_code(*pattern).is_some_and(|p| self.change_pattern(sh, p, now));
                if ok {
                    AckStatus::Accepted
                } else {
                    self.reject(Event::MissionCommand, now)
                }
            }
            CommandBody::Rtl => {
                let ok = self.fire(Event::RtlCommand, now);
                if ok {
                    self.land = None;
                }
                accepted(ok)
            }
            CommandBody::Land { lead, spacing } => {
                if self.land.is_some() {
                    return AckStatus::Accepted;
                }
                let ok = self.fire(Event::LandCommand, now);
                if ok {
                    self.land = Some(LandPlan {
                        issued,
                        slot: landing_slot(self.rank, issued, *lead as f64, *spacing as f64),
                        glide: None,
                    });
                }
                accepted(ok)
            }
            CommandBody::SetParam { param, value } => {
                let ok = PARAM_NAMES
                    .get(*param as usize)
                    .is_some_and(|name| self.guidance.gains.set(name, *value as f64));
                if ok {
                    self.event(now, "param", format!("{} = {value}", PARAM_NAMES[*param as usize]));
                }
                accepted(ok)
            }
        }
    }

    /// Scheduled launch and landing steps, battery and link supervision.
    fn lifecycle(&mut self, sh: &Shared, now: f64) {
        let l = &sh.launch;
        let taxi = taxi_time(l.taxi_distance, self.platform.min_speed);
        if let Some(plan) = self.launch {
            match (self.mode(), plan.taxi_start) {
                (Mode::Standby, None) if now >= plan.slot => {
                    if self.fire(Event::LaunchCommand, now) {
                        self.launch = Some(LaunchPlan {
                            taxi_start: Some(plan.slot.max(plan.received)),
                            ..plan
                        });
                    }
                }
                (Mode::Taxi, Some(start)) if now - start >= taxi => {
                    if self.fire(Event::TaxiComplete, now) {
                        let dir = Vec2::from_angle(l.heading);
                        let extra = self.platform.min_speed * (now - start - taxi);
                        self.state = VehicleState {
                            timestamp: now,
                            ..VehicleState::level(
                                self.home + dir * (l.taxi_distance + extra),
                                0.0,
                                self.platform.min_speed,
                                l.heading,
                            )
                        };
                        self.records.push(Record::Aloft {
                            t: now,
                            id: self.id,
                            tau: start + taxi - plan.issued,
                        });
                    }
                }
                (Mode::Launch, _) if self.state.altitude >= l.airborne_altitude => {
                    if self.fire(Event::Airborne, now) {
                        self.launch = None;
                        if let Some(m) = self.deferred.take() {
                            self.start_mission(sh, m, now);
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(plan) = self.land {
            match (self.mode(), plan.glide) {
                (Mode::Rtl, None) if now >= plan.slot => {
                    if self.fire(Event::LandStart, now) {
                        let d = self.state.position.distance(self.home);
                        let duration = (d / self.platform.min_speed).max(self.state.altitude / l.sink_rate).max(sh.rates.dt());
                        self.land = Some(LandPlan {
                            glide: Some(Glide {
                                from: self.state.position,
                                from_altitude: self.state.altitude,
                                start: now,
                                duration,
                            }),
                            ..plan
                        });
                    }
                }
                (Mode::Land, Some(g)) if now >= g.start + g.duration => {
                    if self.fire(Event::Landed, now) {
                        self.state = VehicleState {
                            timestamp: now,
                            ..VehicleState::level(self.home, 0.0, 0.0, self.state.course)
                        };
                        self.records.push(Record::Touchdown {
                            t: now,
                            id: self.id,
                            tau: g.start + g.duration - plan.issued,
                        });
                        self.land = None;
                    }
                }
                _ => {}
            }
        }
        if self.mode().airborne() {
            self.battery = (1.0 - self.airborne_time / self.platform.endurance).max(0.0);
            if self.battery < crate::gcs::telemetry::BATTERY_LOW && !self.battery_warned {
                self.battery_warned = true;
                self.fire(Event::BatteryLow, now);
            }
        }
        let timeout = sh.coordination.link_lost_timeout;
        if timeout > 0.0 && matches!(self.mode(), Mode::Mission | Mode::Avoid) && !self.link_warned {
            if self.comm.last_heard(GCS_SYSID).is_some_and(|t| now - t > timeout) {
                self.link_warned = true;
                self.fire(Event::LinkLost, now);
            }
        }
    }

    fn peer_position(&self, id: u8, now: f64) -> Option<Vec2> {
        if id == self.id {
            return Some(self.state.position);
        }
        let p = self.peers.get(&id)?;
        (now - p.state.timestamp <= PEER_FRESH).then(|| extrapolate(&p.state, now).position)
    }

    fn start_mission(&mut self, sh: &Shared, mission: Mission, now: f64) {
        if self.mission.as_ref().is_some_and(|m| m.mission.mission_id == mission.mission_id) {
            return;
        }
        let timeout = sh.coordination.member_timeout;
        let mut members: Vec<(u8, Vec2)> = vec![(self.id, self.station)];
        for id in sh.roster.iter().copied().filter(|id| *id != self.id) {
            // Never heard is presumed present; the lost-member check drops it later if silent.
            let present = self.peers.get(&id).is_none_or(|p| {
                matches!(p.mode, Some(Mode::Taxi | Mode::Launch | Mode::Mission | Mode::Avoid)) && self.comm.age(id, now) <= timeout
            });
            if present {
                if let Some(s) = sh.station(id) {
                    members.push((id, s));
                }
            }
        }
        let formed_at = (mission.timestamp * 1000.0).round() as u64;
        let Some(group) = form_groups(&members, sh.comm_range, sh.coordination.group_size, formed_at)
            .into_iter()
            .find(|g| g.contains(self.id))
        else {
            return;
        };
        let tasks = match decompose(&mission, &group) {
            Ok(t) => t,
            Err(e) => {
                self.event(now, "mission_failed", e.to_string());
                return;
            }
        };
        let positions: BTreeMap<u8, Vec2> = group
            .members
            .iter()
            .filter_map(|m| self.peer_position(*m, now).or_else(|| sh.station(*m)).map(|p| (*m, p)))
            .collect();
        let assignment = match allocate(mission.mission_id, &tasks, &group, &positions, self.id) {
            Ok(a) => a,
            Err(e) => {
                self.event(now, "mission_failed", e.to_string());
                return;
            }
        };
        let kind = match mission.params {
            MissionParams::FormationFlight { .. } => "formation",
            MissionParams::TargetTracking { .. } => "tracking",
            MissionParams::Transit { .. } => "path",
        };
        self.event(
            now,
            "mission_start",
            format!("mission {} group {} members {:?}", mission.mission_id, group.group_id, group.members),
        );
        let mut st = MissionState {
            mission,
            group,
            tasks,
            assignment,
            lost: BTreeSet::new(),
            slot_order: Vec::new(),
            my_task: None,
            plan: None,
            segment: 0,
            complete: false,
            scheduler: Scheduler::new(sh.coordination.watchdog),
            started: now,
            planner: make_planner(kind).expect("known planner kind"),
        };
        let stash = std::mem::take(&mut self.stashed);
        for a in stash {
            if a.mission_id == st.mission.mission_id && a.group_id == st.group.group_id {
                st.assignment = resolve_conflict(&st.assignment, &a, &st.task_set(), &st.alive_members());
            } else {
                self.stashed.push(a);
            }
        }
        self.mission = Some(st);
        self.replan(sh, now, false);
    }

    fn on_assignment(&mut self, sh: &Shared, remote: Assignment, now: f64) {
        let Some(st) = self.mission.as_mut() else {
            self.stash(remote);
            return;
        };
        if st.mission.mission_id != remote.mission_id || st.group.group_id != remote.group_id {
            if remote.mission_id != st.mission.mission_id {
                self.stash(remote);
            }
            return;
        }
        let merged = resolve_conflict(&st.assignment, &remote, &st.task_set(), &st.alive_members());
        if merged != st.assignment {
            st.assignment = merged;
            let v = st.assignment.version;
            self.event(now, "assignment", format!("v{v}"));
            self.replan(sh, now, false);
        }
    }

    fn stash(&mut self, a: Assignment) {
        if let Some(s) = self.stashed.iter_mut().find(|s| s.mission_id == a.mission_id && s.group_id == a.group_id) {
            if a.version >= s.version {
                *s = a;
            }
        } else if self.stashed.len() < MAX_STASHED {
            self.stashed.push(a);
        }
    }

    fn change_pattern(&mut self, sh: &Shared, pattern: PatternName, now: f64) -> bool {
        let Some(st) = self.mission.as_mut() else {
            return false;
        };
        let MissionParams::FormationFlight { pattern: p, .. } = &mut st.mission.params else {
            return false;
        };
        *p = pattern;
        match decompose(&st.mission, &st.group) {
            Ok(tasks) => st.tasks = tasks,
            Err(e) => {
                self.event(now, "pattern_failed", e.to_string());
                return false;
            }
        }
        st.planner.on_event(&ReplanTrigger {
            time: now,
            kind: TriggerKind::PatternChange { pattern },
        });
        self.event(now, "pattern", pattern.as_str().to_string());
        self.replan(sh, now, true);
        true
    }

    /// Regenerates the plan when the assignment moved this agent or its slot map.
    fn replan(&mut self, sh: &Shared, now: f64, force: bool) {
        let me = self.id;
        let start = self.state.position;
        let speed = self.platform.cruise_speed;
        let turn_radius = self.platform.min_turn_radius();
        let track_spacing = sh.coordination.track_spacing;
        let Some(st) = self.mission.as_mut() else {
            return;
        };
        let slot_order: Vec<u8> = st.tasks.iter().map(|t| st.assignment.agent_for(t.index).unwrap_or(BROADCAST)).collect();
        let my_task = st.assignment.tasks_of(me).first().copied();
        if !force && slot_order == st.slot_order && my_task == st.my_task && st.plan.is_some() {
            return;
        }
        st.slot_order = slot_order;
        st.my_task = my_task;
        st.plan = None;
        st.segment = 0;
        st.complete = false;
        st.scheduler.clear();
        let Some(index) = my_task else {
            return;
        };
        let Some(task) = st.tasks.iter().find(|t| t.index == index).cloned() else {
            return;
        };
        let task_id = st.mission.mission_id as u32 * 256 + index as u32;
        let n = st.tasks.len();
        let route = group_route(&st.mission, &st.group);
        let plan = match (&st.mission.params, task.kind) {
            (MissionParams::FormationFlight { pattern, altitude, .. }, _) => {
                let request = PlanRequest {
                    task_id,
                    owner: me,
                    start,
                    speed,
                    altitude: *altitude,
                    turn_radius,
                    threats: Vec::new(),
                    blocking: task.blocking,
                    spec: RequestSpec::Formation {
                        group: st.slot_order.clone(),
                        pattern: *pattern,
                        route,
                    },
                };
                st.planner.generate(&request)
            }
            (MissionParams::TargetTracking { area, radius, altitude, .. }, _) => {
                let request = PlanRequest {
                    task_id,
                    owner: me,
                    start,
                    speed,
                    altitude: *altitude,
                    turn_radius,
                    threats: Vec::new(),
                    blocking: task.blocking,
                    spec: RequestSpec::Tracking {
                        area: area.clone(),
                        footprint: track_spacing,
                        radius: *radius,
                        n_vehicles: n,
                        my_index: index as usize,
                    },
                };
                st.planner.generate(&request)
            }
            (MissionParams::Transit { .. }, TaskKind::Transit { slot }) => Ok(TaskPlan {
                task_id,
                owner: me,
                segments: offset_route(&route, transit_offset(slot, n)),
                role: Role::Transit,
                formation_slot: None,
                standoff: None,
                blocking: task.blocking,
                coordinated: false,
            }),
            (MissionParams::Transit { .. }, _) => unreachable!("transit missions decompose into transit tasks"),
        };
        match plan {
            Ok(p) => {
                st.scheduler.load([ScheduledTask {
                    task_id: p.task_id,
                    blocking: p.blocking,
                }]);
                let detail = format!("task {} role {:?} segments {}", index, p.role, p.segments.len());
                st.plan = Some(p);
                self.event(now, "plan", detail);
            }
            Err(e) => self.event(now, "plan_failed", e.to_string()),
        }
    }

    fn coordinate(&mut self, sh: &Shared, inp: &TickInput) {
        let now = inp.now;
        let cycle = inp.tick / sh.rates.divisor(sh.rates.coordination_hz);
        if self.mode().airborne() {
            let dets = detect_targets(self.state.position, now, inp.targets, &sh.sensor, &mut self.rng);
            self.detecting = dets.iter().map(|d| d.target_id).collect();
            for d in dets {
                self.fusion.report(self.id, &d);
                self.send(SwarmMessage::Detection(d), Destination::Broadcast, now);
            }
            self.fusion.update(now);
            if !self.detecting.is_empty() && cycle % IMAGERY_EVERY == 0 {
                self.send_imagery(now);
            }
        } else {
            self.detecting.clear();
        }
        let me = self.id;
        let timeout = sh.coordination.member_timeout;
        let Some(st) = self.mission.as_mut() else {
            return;
        };
        let mut notes = Vec::new();
        for m in st.group.members.clone() {
            let silent = now - self.comm.last_heard(m).unwrap_or(st.started).max(st.started);
            if m != me && !st.lost.contains(&m) && silent > timeout {
                st.lost.insert(m);
                st.assignment = reassign_lost(&st.assignment, &st.tasks, m, me);
                notes.push(("member_lost", format!("agent {m} v{}", st.assignment.version)));
            }
        }
        for ev in st.scheduler.tick(inp.tick, now) {
            match ev {
                ScheduleEvent::Activated { task_id, .. } => notes.push(("task_active", task_id.to_string())),
                ScheduleEvent::Completed { task_id, .. } => notes.push(("task_complete", task_id.to_string())),
                ScheduleEvent::WatchdogTimeout { task_id, .. } => notes.push(("watchdog_timeout", task_id.to_string())),
            }
        }
        let msg = st.assignment.to_msg();
        let progress = match (&st.plan, st.my_task) {
            (Some(p), Some(task)) if p.role == Role::Leader && p.coordinated => {
                let seg = &p.segments[st.segment.min(p.segments.len() - 1)];
                Some(PlanProgress {
                    time_ms: (now * 1000.0).round() as u32,
                    mission_id: st.mission.mission_id,
                    task,
                    segment: st.segment as u8,
                    progress: (st.segment_offset() + seg.progress(self.state.position)) as f32,
                })
            }
            _ => None,
        };
        for (name, detail) in notes {
            self.event(now, name, detail);
        }
        self.send(SwarmMessage::Assignment(msg), Destination::Broadcast, now);
        if let Some(p) = progress {
            self.send(SwarmMessage::PlanProgress(p), Destination::Broadcast, now);
        }
        self.replan(sh, now, false);
    }

    fn send_imagery(&mut self, now: f64) {
        self.image_id = self.image_id.wrapping_add(1);
        for index in 0..IMAGERY_CHUNKS {
            let data: Vec<u8> = (0..IMAGERY_CHUNK_LEN).map(|_| self.rng.random()).collect();
            let chunk = ImageryChunk {
                image_id: self.image_id,
                index,
                total: IMAGERY_CHUNKS,
                data,
            };
            self.send(SwarmMessage::ImageryChunk(chunk), Destination::Node(GCS_SYSID), now);
        }
    }

    fn heartbeat(&mut self, now: f64) {
        let s = self.state;
        let hb = Heartbeat {
            time_ms: (now * 1000.0).round() as u32,
            position: [s.position.x as f32, s.position.y as f32],
            altitude: s.altitude as f32,
            airspeed: s.airspeed as f32,
            course: s.course as f32,
            roll: s.roll as f32,
            pitch: s.pitch as f32,
            battery: (self.battery * 200.0).round().clamp(0.0, 200.0) as u8,
            mode: self.mode().code(),
            group: self.group().unwrap_or(0xFF),
            role: role_code(self.role()),
        };
        self.send(SwarmMessage::Heartbeat(hb), Destination::Broadcast, now);
    }

    fn avoid_command(&self, now: f64) -> Option<GuidanceCommand> {
        let neighbors: Vec<VehicleState> = self
            .peers
            .values()
            .filter(|p| p.mode.is_some_and(|m| m.airborne()) && now - p.state.timestamp <= self.guidance.gains.staleness)
            .map(|p| extrapolate(&p.state, now))
            .collect();
        self.guidance.avoid(&self.state, &neighbors, &[])
    }

    fn loiter(&self, center: Vec2, radius: f64, altitude: f64) -> GuidanceCommand {
        match self.guidance.vf_orbit(&self.state, center, radius, OrbitDirection::Ccw) {
            Ok(mut c) => {
                c.desired_altitude = altitude;
                c
            }
            Err(_) => GuidanceCommand::hold(&self.state, self.platform.cruise_speed, altitude, GuidanceSource::PathFollow),
        }
    }

    fn guide(&mut self, sh: &Shared, now: f64) {
        let l = &sh.launch;
        let cmd = match self.mode() {
            Mode::Launch => Some(GuidanceCommand {
                desired_course: l.heading,
                desired_speed: self.platform.cruise_speed,
                desired_altitude: sh.stations.altitude,
                source: GuidanceSource::PathFollow,
                course_rate: 0.0,
            }),
            Mode::Mission | Mode::Rtl => match self.avoid_command(now) {
                Some(a) if self.fire(Event::AvoidTriggered, now) => Some(a),
                _ => Some(self.nominal_command(sh, now)),
            },
            Mode::Avoid => match self.avoid_command(now) {
                Some(a) => Some(a),
                None => {
                    self.fire(Event::AvoidCleared, now);
                    Some(self.nominal_command(sh, now))
                }
            },
            _ => None,
        };
        self.cmd = cmd;
    }

    /// Guidance for the current mission task, or a loiter when there is none.
    fn nominal_command(&mut self, sh: &Shared, now: f64) -> GuidanceCommand {
        let stations = sh.stations;
        if matches!(self.mode(), Mode::Rtl | Mode::Land) {
            return self.loiter(self.station, stations.radius, stations.altitude);
        }
        let state = self.state;
        let me = self.id;
        let turn = self.platform.min_turn_radius();
        let Some(st) = self.mission.as_mut() else {
            return self.loiter(self.station, stations.radius, stations.altitude);
        };
        let Some(plan) = st.plan.as_ref() else {
            return self.loiter(self.station, stations.radius, stations.altitude);
        };
        let task_id = plan.task_id;
        let role = plan.role;
        let n_seg = plan.segments.len();
        if st.complete && role != Role::Tracker {
            let end = plan.segments[n_seg - 1].end();
            let alt = plan.segments[n_seg - 1].desired_altitude;
            return self.loiter(end, stations.radius, alt);
        }
        let seg = &plan.segments[st.segment];
        let prog = seg.progress(state.position);
        let len = seg.length();
        let mut completed = false;
        if st.segment + 1 < n_seg {
            if prog >= len - turn.min(0.5 * len) {
                st.segment += 1;
            }
        } else if prog >= len {
            if role == Role::Tracker {
                st.segment = 0;
            } else {
                st.complete = true;
                completed = true;
            }
        }
        if completed {
            if let Some(ScheduleEvent::Completed { task_id, .. }) = st.scheduler.complete(task_id, now) {
                self.event(now, "task_complete", task_id.to_string());
            }
            return self.nominal_command(sh, now);
        }
        let st = self.mission.as_ref().expect("mission present");
        let plan = st.plan.as_ref().expect("plan present");
        let seg = &plan.segments[st.segment];
        let g = &self.guidance;
        let result = match role {
            Role::Leader if plan.coordinated => {
                let mine = st.segment_offset() + seg.progress(state.position);
                let peers: Vec<(u8, f64)> = self
                    .leader_progress
                    .iter()
                    .filter(|(id, p)| **id != me && p.mission_id == st.mission.mission_id && now - p.time <= PROGRESS_FRESH)
                    .map(|(id, p)| (*id, p.progress + seg.desired_speed * (now - p.time)))
                    .collect();
                g.coordinated_path_follow(&state, seg, &peers, mine)
            }
            Role::Follower => {
                let slot = plan.formation_slot.expect("followers carry a slot");
                match self.peers.get(&slot.leader_id) {
                    Some(leader) => g.follow_leader(&state, &leader.state, &slot, now).or_else(|_| g.follow_segment(&state, seg)),
                    None => g.follow_segment(&state, seg),
                }
            }
            Role::Tracker => match (self.fusion.estimate(now), plan.standoff) {
                (Some((target, est)), Some(mut spec)) if self.fusion.fused(target).is_some_and(|f| now - f.updated <= ESTIMATE_MAX_AGE) => {
                    spec.target = est;
                    let phases: Vec<f64> = self
                        .peers
                        .iter()
                        .filter(|(_, p)| p.role == Some(Role::Tracker) && p.group == Some(st.group.group_id) && now - p.state.timestamp <= PEER_FRESH)
                        .map(|(_, p)| (extrapolate(&p.state, now).position - est.position).angle())
                        .collect();
                    g.standoff_track(&state, &spec, &phases)
                }
                _ => g.follow_segment(&state, seg),
            },
            _ => g.follow_segment(&state, seg),
        };
        result.unwrap_or_else(|_| GuidanceCommand::hold(&state, seg.desired_speed, seg.desired_altitude, GuidanceSource::PathFollow))
    }

    fn zero_actuators(&self) -> Vec<f64> {
        vec![0.0; self.platform.allocation.channels.len()]
    }

    fn effort_actuators(&self, effort: &ControlEffort) -> Vec<f64> {
        allocate_effort(effort, &self.platform.allocation).map_or_else(|_| self.zero_actuators(), |a| a.channels)
    }

    fn act(&mut self, sh: &Shared, inp: &TickInput) {
        let (now, dt) = (inp.now, inp.dt);
        let before = self.state;
        let mode = self.mode();
        if mode.airborne() {
            self.airborne_time += dt;
        }
        let l = &sh.launch;
        let mut next = before;
        next.timestamp = now + dt;
        let mut cmd_logged = None;
        let actuators = match mode {
            Mode::Standby => self.zero_actuators(),
            Mode::Failsafe => {
                if before.altitude > 0.0 {
                    if let Ok(s) = step_dynamics(&self.platform, &before, &VirtualControls::idle(), &self.wind, dt) {
                        next = s.state;
                    }
                } else {
                    next.airspeed = 0.0;
                }
                self.zero_actuators()
            }
            Mode::Taxi => {
                let start = self.launch.and_then(|p| p.taxi_start).unwrap_or(now);
                let (d, v) = taxi_kinematics(now + dt - start, l.taxi_distance, self.platform.min_speed);
                next.position = self.home + Vec2::from_angle(l.heading) * d;
                next.airspeed = v;
                next.course = l.heading;
                self.effort_actuators(&ControlEffort {
                    throttle: 1.0,
                    ..ControlEffort::default()
                })
            }
            Mode::Land => {
                if let Some(g) = self.land.and_then(|p| p.glide) {
                    let f = ((now + dt - g.start) / g.duration).clamp(0.0, 1.0);
                    next.position = g.from.lerp(self.home, f);
                    next.altitude = g.from_altitude * (1.0 - f);
                    next.airspeed = self.platform.min_speed;
                    if let Some(d) = (self.home - g.from).normalized() {
                        next.course = d.angle();
                    }
                    next.roll = 0.0;
                    next.pitch = 0.0;
                }
                self.effort_actuators(&ControlEffort {
                    throttle: self.platform.trim_throttle(self.platform.min_speed),
                    ..ControlEffort::default()
                })
            }
            Mode::Launch | Mode::Mission | Mode::Avoid | Mode::Rtl => {
                let cmd = self
                    .cmd
                    .unwrap_or_else(|| GuidanceCommand::hold(&before, self.platform.cruise_speed, before.altitude, GuidanceSource::PathFollow));
                cmd_logged = Some(cmd);
                let roll = cmd.roll_setpoint(&before, &self.platform);
                let fuzzy = &ControlTables::defaults().fuzzy;
                match speed_height_control(&before, cmd.desired_speed, cmd.desired_altitude, fuzzy, &self.platform) {
                    Ok((pitch, throttle)) => {
                        let vc = VirtualControls {
                            roll,
                            pitch,
                            throttle,
                            yaw_trim: 0.0,
                        };
                        let act = self.effort_actuators(&attitude_control(&before, &vc));
                        match step_dynamics(&self.platform, &before, &vc, &self.wind, dt) {
                            Ok(s) if !s.stalled => next = s.state,
                            Ok(s) => {
                                next = s.state;
                                self.event(now, "stall", format!("airspeed {:.2}", s.state.airspeed));
                                self.fire(Event::Fault, now);
                            }
                            Err(e) => {
                                self.event(now, "dynamics", e.to_string());
                                self.fire(Event::Fault, now);
                            }
                        }
                        act
                    }
                    Err(e) => {
                        self.event(now, "control", e.to_string());
                        self.fire(Event::Fault, now);
                        self.zero_actuators()
                    }
                }
            }
        };
        self.sample = Some(TickSample {
            state: before,
            cmd: cmd_logged,
            actuators,
        });
        self.state = next;
    }
}
