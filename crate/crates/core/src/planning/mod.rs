//! Task planning: path, formation and tracking planners behind one interface.

pub mod coverage;
pub mod formation;
pub mod path;

pub use coverage::plan_tracking;
pub use formation::{plan_formation, FormationPattern, PatternName};
pub use path::plan_path;

use crate::airframe::VehicleState;
use crate::geometry::{Circle, Polygon, Vec2};
use crate::guidance::{FormationSlot, OrbitDirection, PathSegment, StandoffSpec, TargetEstimate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Consecutive segments must join within this distance, m.
pub const CONNECT_TOLERANCE: f64 = 1.0;
pub const PLAN_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanningError {
    #[error("unknown planner kind {0:?}")]
    UnknownKind(String),
    #[error("unknown formation pattern {0:?}")]
    UnknownPattern(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("group of {group} does not fit a pattern of {slots} slots")]
    SizeMismatch { group: usize, slots: usize },
    #[error("goal lies inside a threat")]
    GoalInsideThreat,
    #[error("start lies inside an inflated threat")]
    StartInsideThreat,
    #[error("no collision-free route")]
    NoRoute,
    #[error("non-finite input")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("search area must be a simple polygon with positive area")]
    DegeneratePolygon,
    #[error("{kind} planner cannot serve a {request} request")]
    WrongRequest { kind: &'static str, request: &'static str },
    #[error("owner {0} is not in the group")]
    NotInGroup(u8),
    #[error("invalid plan {task_id}: {reason}")]
    InvalidPlan { task_id: u32, reason: String },
    #[error("plan file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Follower,
    Tracker,
    Transit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub task_id: u32,
    pub owner: u8,
    pub segments: Vec<PathSegment>,
    pub role: Role,
    #[serde(default)]
    pub formation_slot: Option<FormationSlot>,
    #[serde(default)]
    pub standoff: Option<StandoffSpec>,
    pub blocking: bool,
    /// Leader routes flown with arrival-time consensus.
    #[serde(default)]
    pub coordinated: bool,
}

impl TaskPlan {
    fn invalid(&self, reason: impl Into<String>) -> PlanningError {
        PlanningError::InvalidPlan {
            task_id: self.task_id,
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if self.segments.is_empty() {
            return Err(self.invalid("no segments"));
        }
        for s in &self.segments {
            let finite = s.start().is_finite()
                && s.end().is_finite()
                && s.desired_speed.is_finite()
                && s.desired_altitude.is_finite()
                && s.length().is_finite();
            if !finite {
                return Err(self.invalid("non-finite segment"));
            }
            if s.length() <= 0.0 {
                return Err(self.invalid("zero-length segment"));
            }
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            let gap = w[0].end().distance(w[1].start());
            if gap > CONNECT_TOLERANCE {
                return Err(self.invalid(format!("segments {i} and {} are {gap:.2} m apart", i + 1)));
            }
        }
        match (self.role, self.formation_slot.is_some(), self.standoff.is_some()) {
            (Role::Follower, true, false) | (Role::Tracker, false, true) | (Role::Leader | Role::Transit, false, false) => Ok(()),
            _ => Err(self.invalid(format!("{:?} role with inconsistent slot/standoff fields", self.role))),
        }
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerKind {
    Conflict { mission_id: u16 },
    Staleness { peer: u8 },
    Threat { threat: Circle },
    PatternChange { pattern: PatternName },
    Command { command_id: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanTrigger {
    /// Time the triggering event was observed at its source, s.
    pub time: f64,
    #[serde(flatten)]
    pub kind: TriggerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestSpec {
    Path { goal: Vec2 },
    Formation {
        group: Vec<u8>,
        pattern: PatternName,
        route: Vec<PathSegment>,
    },
    Tracking {
        area: Polygon,
        footprint: f64,
        radius: f64,
        n_vehicles: usize,
        my_index: usize,
    },
}

impl RequestSpec {
    fn name(&self) -> &'static str {
        match self {
            RequestSpec::Path { .. } => "path",
            RequestSpec::Formation { .. } => "formation",
            RequestSpec::Tracking { .. } => "tracking",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub task_id: u32,
    pub owner: u8,
    pub start: Vec2,
    pub speed: f64,
    pub altitude: f64,
    pub turn_radius: f64,
    #[serde(default)]
    pub threats: Vec<Circle>,
    pub blocking: bool,
    pub spec: RequestSpec,
}

/// A planner owned by one agent.
pub trait Planner: Send {
    fn kind(&self) -> &'static str;
    /// Intake of peer snapshots decoded from the network.
    fn receive_neighbors(&mut self, snapshots: &[(u8, VehicleState)]);
    fn generate(&mut self, request: &PlanRequest) -> Result<TaskPlan, PlanningError>;
    /// Records the event and reports whether the current plan must be regenerated.
    fn on_event(&mut self, trigger: &ReplanTrigger) -> bool;
}

pub fn make_planner(kind: &str) -> Result<Box<dyn Planner>, PlanningError> {
    match kind {
        "path" => Ok(Box::new(PathPlanner::default())),
        "formation" => Ok(Box::new(FormationPlanner::default())),
        "tracking" => Ok(Box::new(TrackingPlanner::default())),
        other => Err(PlanningError::UnknownKind(other.to_string())),
    }
}

/// Threats learned through events, kept sorted so replans are reproducible.
#[derive(Debug, Clone, Default)]
struct ThreatMemory(Vec<Circle>);

impl ThreatMemory {
    fn add(&mut self, c: Circle) -> bool {
        if self.0.contains(&c) {
            return false;
        }
        self.0.push(c);
        self.0.sort_by(|a, b| {
            a.center.x.total_cmp(&b.center.x).then(a.center.y.total_cmp(&b.center.y)).then(a.radius.total_cmp(&b.radius))
        });
        true
    }

    fn with(&self, extra: &[Circle]) -> Vec<Circle> {
        let mut all = extra.to_vec();
        all.extend(self.0.iter().copied().filter(|c| !extra.contains(c)));
        all
    }
}

#[derive(Debug, Default)]
pub struct PathPlanner {
    neighbors: BTreeMap<u8, VehicleState>,
    threats: ThreatMemory,
}

impl Planner for PathPlanner {
    fn kind(&self) -> &'static str {
        "path"
    }

    fn receive_neighbors(&mut self, snapshots: &[(u8, VehicleState)]) {
        self.neighbors.extend(snapshots.iter().copied());
    }

    fn generate(&mut self, r: &PlanRequest) -> Result<TaskPlan, PlanningError> {
        let RequestSpec::Path { goal } = &r.spec else {
            return Err(PlanningError::WrongRequest {
                kind: "path",
                request: r.spec.name(),
            });
        };
        let segments = plan_path(r.start, *goal, &self.threats.with(&r.threats), r.turn_radius, r.speed, r.altitude)?;
        Ok(TaskPlan {
            task_id: r.task_id,
            owner: r.owner,
            segments,
            role: Role::Transit,
            formation_slot: None,
            standoff: None,
            blocking: r.blocking,
            coordinated: false,
        })
    }

    fn on_event(&mut self, trigger: &ReplanTrigger) -> bool {
        match &trigger.kind {
            TriggerKind::Threat { threat } => self.threats.add(*threat),
            TriggerKind::Command { .. } | TriggerKind::Conflict { .. } => true,
            TriggerKind::Staleness { .. } | TriggerKind::PatternChange { .. } => false,
        }
    }
}

#[derive(Debug, Default)]
pub struct FormationPlanner {
    neighbors: BTreeMap<u8, VehicleState>,
    pattern_override: Option<PatternName>,
}

impl FormationPlanner {
    pub fn pattern(&self, requested: PatternName) -> PatternName {
        self.pattern_override.unwrap_or(requested)
    }
}

impl Planner for FormationPlanner {
    fn kind(&self) -> &'static str {
        "formation"
    }

    fn receive_neighbors(&mut self, snapshots: &[(u8, VehicleState)]) {
        self.neighbors.extend(snapshots.iter().copied());
    }

    fn generate(&mut self, r: &PlanRequest) -> Result<TaskPlan, PlanningError> {
        let RequestSpec::Formation { group, pattern, route } = &r.spec else {
            return Err(PlanningError::WrongRequest {
                kind: "formation",
                request: r.spec.name(),
            });
        };
        let index = group.iter().position(|g| *g == r.owner).ok_or(PlanningError::NotInGroup(r.owner))?;
        let table = FormationPattern::build(self.pattern(*pattern), group.len())?;
        let mut plans = plan_formation(group, &table, route, r.task_id - index as u32)?;
        let mut plan = plans.swap_remove(index);
        plan.blocking = r.blocking;
        Ok(plan)
    }

    fn on_event(&mut self, trigger: &ReplanTrigger) -> bool {
        match &trigger.kind {
            TriggerKind::PatternChange { pattern } => {
                let changed = self.pattern_override != Some(*pattern);
                self.pattern_override = Some(*pattern);
                changed
            }
            TriggerKind::Staleness { .. } | TriggerKind::Conflict { .. } | TriggerKind::Command { .. } => true,
            TriggerKind::Threat { .. } => false,
        }
    }
}

#[derive(Debug, Default)]
pub struct TrackingPlanner {
    neighbors: BTreeMap<u8, VehicleState>,
    threats: ThreatMemory,
}

impl Planner for TrackingPlanner {
    fn kind(&self) -> &'static str {
        "tracking"
    }

    fn receive_neighbors(&mut self, snapshots: &[(u8, VehicleState)]) {
        self.neighbors.extend(snapshots.iter().copied());
    }

    fn generate(&mut self, r: &PlanRequest) -> Result<TaskPlan, PlanningError> {
        let RequestSpec::Tracking {
            area,
            footprint,
            radius,
            n_vehicles,
            my_index,
        } = &r.spec
        else {
            return Err(PlanningError::WrongRequest {
                kind: "tracking",
                request: r.spec.name(),
            });
        };
        if *n_vehicles == 0 || my_index >= n_vehicles || !radius.is_finite() || *radius <= 0.0 {
            return Err(PlanningError::Degenerate("standoff slot".into()));
        }
        let segments = coverage::plan_tracking_share(area, r.turn_radius, *footprint, r.start, r.speed, r.altitude, *my_index, *n_vehicles)?;
        Ok(TaskPlan {
            task_id: r.task_id,
            owner: r.owner,
            segments,
            role: Role::Tracker,
            formation_slot: None,
            standoff: Some(StandoffSpec {
                target: TargetEstimate {
                    position: area.centroid(),
                    velocity: Vec2::ZERO,
                },
                radius: *radius,
                n_vehicles: *n_vehicles,
                my_index: *my_index,
                altitude: r.altitude,
                direction: OrbitDirection::Ccw,
            }),
            blocking: r.blocking,
            coordinated: false,
        })
    }

    fn on_event(&mut self, trigger: &ReplanTrigger) -> bool {
        match &trigger.kind {
            TriggerKind::Threat { threat } => self.threats.add(*threat),
            TriggerKind::Command { .. } | TriggerKind::Conflict { .. } => true,
            TriggerKind::Staleness { .. } | TriggerKind::PatternChange { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub version: u32,
    pub plans: Vec<TaskPlan>,
}

pub fn export_plans(plans: &[TaskPlan]) -> String {
    let file = PlanFile {
        version: PLAN_FILE_VERSION,
        plans: plans.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("plans serialize")
}

/// Parses and validates a stored plan file.
pub fn import_plans(text: &str) -> Result<Vec<TaskPlan>, PlanningError> {
    let file: PlanFile = serde_json::from_str(text).map_err(|e| PlanningError::Parse(e.to_string()))?;
    if file.version != PLAN_FILE_VERSION {
        return Err(PlanningError::Parse(format!("unsupported version {}", file.version)));
    }
    for p in &file.plans {
        p.validate()?;
    }
    Ok(file.plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn request(spec: RequestSpec) -> PlanRequest {
        PlanRequest {
            task_id: 0,
            owner: 1,
            start: Vec2::ZERO,
            speed: 19.0,
            altitude: 120.0,
            turn_radius: 40.0,
            threats: vec![],
            blocking: true,
            spec,
        }
    }

    fn route() -> Vec<PathSegment> {
        vec![PathSegment::straight(Vec2::ZERO, Vec2::new(3000.0, 0.0), 19.0, 120.0)]
    }

    fn follower_request() -> PlanRequest {
        let mut r = request(RequestSpec::Formation {
            group: vec![0, 1, 2],
            pattern: PatternName::Vee,
            route: route(),
        });
        r.task_id = 1;
        r
    }

    #[test]
    fn factory_dispatch() {
        let mut f = make_planner("formation").unwrap();
        let plan = f.generate(&follower_request()).unwrap();
        assert!(plan.formation_slot.is_some());
        let mut t = make_planner("tracking").unwrap();
        let plan = t
            .generate(&request(RequestSpec::Tracking {
                area: Polygon::rectangle(Vec2::new(1000.0, 0.0), Vec2::new(1400.0, 400.0)),
                footprint: 100.0,
                radius: 100.0,
                n_vehicles: 3,
                my_index: 0,
            }))
            .unwrap();
        assert!(plan.standoff.is_some());
        assert!(matches!(make_planner("orbit_race"), Err(PlanningError::UnknownKind(_))));
        assert!(matches!(
            t.generate(&request(RequestSpec::Path { goal: Vec2::new(1.0, 0.0) })),
            Err(PlanningError::WrongRequest { .. })
        ));
    }

    #[test]
    fn pattern_change_is_idempotent() {
        let mut f = make_planner("formation").unwrap();
        let trigger = ReplanTrigger {
            time: 5.0,
            kind: TriggerKind::PatternChange {
                pattern: PatternName::Line,
            },
        };
        assert!(f.on_event(&trigger));
        let first = f.generate(&follower_request()).unwrap();
        assert!(!f.on_event(&trigger));
        let second = f.generate(&follower_request()).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.formation_slot.unwrap().offset, Vec2::new(0.0, 70.0));
    }

    #[test]
    fn threat_event_replans_around() {
        let mut p = make_planner("path").unwrap();
        let r = request(RequestSpec::Path {
            goal: Vec2::new(2000.0, 0.0),
        });
        assert_eq!(p.generate(&r).unwrap().segments.len(), 1);
        let t = ReplanTrigger {
            time: 1.0,
            kind: TriggerKind::Threat {
                threat: Circle::new(Vec2::new(1000.0, 0.0), 100.0),
            },
        };
        assert!(p.on_event(&t));
        let a = p.generate(&r).unwrap();
        assert!(!p.on_event(&t));
        assert_eq!(a, p.generate(&r).unwrap());
        assert!(a.segments.len() > 1);
    }

    #[test]
    fn plan_file_round_trip() {
        let mut f = make_planner("formation").unwrap();
        let plan = f.generate(&follower_request()).unwrap();
        let text = export_plans(std::slice::from_ref(&plan));
        assert_eq!(import_plans(&text).unwrap(), vec![plan.clone()]);
        let mut broken = plan;
        broken.formation_slot = None;
        assert!(matches!(import_plans(&export_plans(&[broken])), Err(PlanningError::InvalidPlan { .. })));
        assert!(matches!(import_plans("{"), Err(PlanningError::Parse(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn factory_plans_are_valid(
            kind in 0usize..3,
            n in 1usize..10,
            pattern in 0u8..4,
            gx in 500f64..5000.0,
            gy in -3000f64..3000.0,
            w in 100f64..800.0,
            h in 100f64..800.0,
        ) {
            let kinds = ["path", "formation", "tracking"];
            let mut planner = make_planner(kinds[kind]).unwrap();
            let goal = Vec2::new(gx, gy);
            let spec = match kind {
                0 => RequestSpec::Path { goal },
                1 => RequestSpec::Formation {
                    group: (0..n as u8).collect(),
                    pattern: PatternName::from_code(pattern).unwrap(),
                    route: vec![
                        PathSegment::straight(Vec2::ZERO, goal, 19.0, 120.0),
                        PathSegment::straight(goal, goal + Vec2::new(0.0, 1500.0), 19.0, 120.0),
                    ],
                },
                _ => RequestSpec::Tracking {
                    area: Polygon::rectangle(goal, goal + Vec2::new(w, h)),
                    footprint: 100.0,
                    radius: 100.0,
                    n_vehicles: n,
                    my_index: n - 1,
                },
            };
            for owner in 0..n as u8 {
                let mut r = request(spec.clone());
                r.owner = owner;
                r.task_id = owner as u32;
                let plan = planner.generate(&r).unwrap();
                prop_assert!(plan.validate().is_ok(), "{:?}", plan.validate());
                if kind != 1 {
                    break;
                }
            }
        }
    }
}
