//! Missions, coordination groups and decomposition into tasks.

use super::CoordError;
use crate::geometry::{Polygon, Vec2};
use crate::guidance::PathSegment;
use crate::planning::formation::offset_route;
use crate::planning::path::segments_from_waypoints;
use crate::planning::{FormationPattern, PatternName};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lateral distance between the routes of neighbouring groups, m.
pub const LANE_SPACING: f64 = 300.0;
/// Lateral distance between transit members, m.
pub const TRANSIT_SPACING: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionKind {
    FormationFlight,
    TargetTracking,
    Transit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MissionParams {
    FormationFlight {
        pattern: PatternName,
        waypoints: Vec<Vec2>,
        speed: f64,
        altitude: f64,
    },
    TargetTracking {
        area: Polygon,
        radius: f64,
        altitude: f64,
        #[serde(default = "one")]
        target_count: usize,
    },
    Transit {
        waypoints: Vec<Vec2>,
        speed: f64,
        altitude: f64,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub mission_id: u16,
    /// Operator station that issued the mission.
    #[serde(default)]
    pub issued_by: u8,
    #[serde(default)]
    pub timestamp: f64,
    #[serde(flatten)]
    pub params: MissionParams,
}

impl Mission {
    pub fn kind(&self) -> MissionKind {
        match self.params {
            MissionParams::FormationFlight { .. } => MissionKind::FormationFlight,
            MissionParams::TargetTracking { .. } => MissionKind::TargetTracking,
            MissionParams::Transit { .. } => MissionKind::Transit,
        }
    }

    pub fn validate(&self) -> Result<(), CoordError> {
        let bad = |why: &str| Err(CoordError::InvalidMission(self.mission_id, why.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        match &self.params {
            MissionParams::FormationFlight {
                waypoints, speed, altitude, ..
            }
            | MissionParams::Transit {
                waypoints, speed, altitude, ..
            } => {
                if waypoints.len() < 2 || waypoints.iter().any(|w| !w.is_finite()) {
                    return bad("route needs at least two finite waypoints");
                }
                if waypoints.windows(2).any(|w| w[0].distance(w[1]) < 1.0) {
                    return bad("repeated waypoint");
                }
                if !finite(&[*speed, *altitude]) {
                    return bad("speed and altitude must be positive");
                }
            }
            MissionParams::TargetTracking {
                area, radius, altitude, target_count,
            } => {
                if !area.is_simple() || area.area() <= 0.0 {
                    return bad("search area must be a simple polygon");
                }
                if !finite(&[*radius, *altitude]) || *target_count == 0 {
                    return bad("radius, altitude and target count must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinationGroup {
    pub group_id: u8,
    /// Sorted member ids.
    pub members: Vec<u8>,
    /// Number of groups formed alongside this one.
    pub of: usize,
    pub formed_at_ms: u64,
}

impl CoordinationGroup {
    pub fn contains(&self, id: u8) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    /// Lateral offset of this group's lane from the mission route.
    pub fn lane_offset(&self) -> f64 {
        (self.group_id as f64 - (self.of.max(1) - 1) as f64 / 2.0) * LANE_SPACING
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Capacity-bounded k-means split of `ids` into `k` chunks of at most `cap`.
fn split_cluster(ids: &[u8], pos: &BTreeMap<u8, Vec2>, k: usize, cap: usize) -> Vec<Vec<u8>> {
    // Farthest-point seeding from the lowest id.
    let mut centres = vec![pos[&ids[0]]];
    while centres.len() < k {
        let next = ids
            .iter()
            .map(|i| pos[i])
            .max_by(|a, b| {
                let da = centres.iter().map(|c| c.distance(*a)).fold(f64::INFINITY, f64::min);
                let db = centres.iter().map(|c| c.distance(*b)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .expect("non-empty");
        centres.push(next);
    }
    let mut chunks = vec![Vec::new(); k];
    for _ in 0..20 {
        let mut pairs: Vec<(f64, u8, usize)> = ids
            .iter()
            .flat_map(|i| centres.iter().enumerate().map(move |(c, ctr)| (pos[i].distance(*ctr), *i, c)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = vec![Vec::new(); k];
        let mut placed = BTreeMap::new();
        for (_, id, c) in pairs {
            if placed.contains_key(&id) || next[c].len() >= cap {
                continue;
            }
            placed.insert(id, c);
            next[c].push(id);
        }
        for chunk in &mut next {
            chunk.sort_unstable();
        }
        let stable = next == chunks;
        chunks = next;
        for (c, chunk) in chunks.iter().enumerate() {
            if !chunk.is_empty() {
                centres[c] = chunk.iter().fold(Vec2::ZERO, |a, i| a + pos[i]) / chunk.len() as f64;
            }
        }
        if stable {
            break;
        }
    }
    chunks.retain(|c| !c.is_empty());
    chunks
}

/// Connected components of the comm-range graph, split into chunks of at most
/// `target` members by spatial clustering.
pub fn form_groups(members: &[(u8, Vec2)], comm_range: f64, target: usize, formed_at_ms: u64) -> Vec<CoordinationGroup> {
    let mut sorted: Vec<(u8, Vec2)> = members.to_vec();
    sorted.sort_by_key(|m| m.0);
    sorted.dedup_by_key(|m| m.0);
    let n = sorted.len();
    let target = target.max(1);
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if sorted[i].1.distance(sorted[j].1) <= comm_range {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(sorted[i].0);
    }
    let pos: BTreeMap<u8, Vec2> = sorted.iter().copied().collect();
    let mut chunks: Vec<Vec<u8>> = Vec::new();
    for ids in components.into_values() {
        let k = ids.len().div_ceil(target);
        if k <= 1 {
            chunks.push(ids);
        } else {
            chunks.extend(split_cluster(&ids, &pos, k, target));
        }
    }
    chunks.sort_by_key(|c| c[0]);
    let of = chunks.len();
    chunks
        .into_iter()
        .enumerate()
        .map(|(g, members)| CoordinationGroup {
            group_id: g as u8,
            members,
            of,
            formed_at_ms,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Lead { slot: usize },
    Follow { slot: usize },
    Track { slot: usize },
    Transit { slot: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub index: u8,
    pub kind: TaskKind,
    /// Where the task begins; bids are measured to this point.
    pub start: Vec2,
    /// Lower values are auctioned first.
    pub priority: u8,
    pub blocking: bool,
}

impl Task {
    pub fn is_lead(&self) -> bool {
        matches!(self.kind, TaskKind::Lead { .. })
    }
}

/// The group's reference route, shifted into its lane.
pub fn group_route(mission: &Mission, group: &CoordinationGroup) -> Vec<PathSegment> {
    match &mission.params {
        MissionParams::FormationFlight {
            waypoints, speed, altitude, ..
        }
        | MissionParams::Transit {
            waypoints, speed, altitude, ..
        } => offset_route(&segments_from_waypoints(waypoints, *speed, *altitude), group.lane_offset()),
        MissionParams::TargetTracking { .. } => Vec::new(),
    }
}

pub fn decompose(mission: &Mission, group: &CoordinationGroup) -> Result<Vec<Task>, CoordError> {
    mission.validate()?;
    let n = group.members.len();
    if n == 0 {
        return Err(CoordError::EmptyGroup);
    }
    let tasks = match &mission.params {
        MissionParams::FormationFlight { pattern, .. } => {
            let table = FormationPattern::build(*pattern, n).map_err(|e| CoordError::InvalidMission(mission.mission_id, e.to_string()))?;
            let route = group_route(mission, group);
            let (origin, course) = (route[0].start(), route[0].path_course().unwrap_or(0.0));
            let t = Vec2::from_angle(course);
            table
                .layout()
                .into_iter()
                .zip(&table.slots)
                .enumerate()
                .map(|(i, (at, slot))| {
                    let lead = slot.leader.is_none();
                    Task {
                        index: i as u8,
                        kind: if lead { TaskKind::Lead { slot: i } } else { TaskKind::Follow { slot: i } },
                        start: origin + t * at.x + t.perp_left() * at.y,
                        priority: if lead { 0 } else { 1 },
                        blocking: true,
                    }
                })
                .collect()
        }
        MissionParams::TargetTracking { area, radius, .. } => {
            let centre = area.centroid();
            (0..n)
                .map(|i| Task {
                    index: i as u8,
                    kind: TaskKind::Track { slot: i },
                    start: centre + Vec2::from_angle(2.0 * std::f64::consts::PI * i as f64 / n as f64) * *radius,
                    priority: 0,
                    blocking: false,
                })
                .collect()
        }
        MissionParams::Transit { .. } => {
            let route = group_route(mission, group);
            let origin = route[0].start();
            let left = Vec2::from_angle(route[0].path_course().unwrap_or(0.0)).perp_left();
            (0..n)
                .map(|i| Task {
                    index: i as u8,
                    kind: TaskKind::Transit { slot: i },
                    start: origin + left * transit_offset(i, n),
                    priority: 0,
                    blocking: true,
                })
                .collect()
        }
    };
    Ok(tasks)
}

/// Lateral offset of transit member slot `i` of `n`.
pub fn transit_offset(i: usize, n: usize) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * TRANSIT_SPACING
}
