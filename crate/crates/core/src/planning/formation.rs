//! Formation slot tables and per-member plan generation.

use super::{PlanningError, Role, TaskPlan};
use crate::geometry::Vec2;
use crate::guidance::{FormationSlot, PathSegment, SegmentGeometry};
use serde::{Deserialize, Serialize};

/// Along-track spacing between consecutive ranks, m.
pub const RANK_SPACING: f64 = 70.0;
/// Abreast spacing in the line pattern, m.
pub const LINE_SPACING: f64 = 70.0;
/// Vee steps, m.
pub const VEE_STEP: Vec2 = Vec2::new(50.0, 50.0);
/// Cross-track spacing within a triangle row, m.
pub const TRIANGLE_ROW_SPACING: f64 = 80.0;
/// Half the distance between the two columns, m.
pub const COLUMN_HALF_WIDTH: f64 = 50.0;
/// Groups at least this large fly two columns behind two leaders.
pub const TWO_LEADER_MIN_GROUP: usize = 5;
pub const MIN_SLOT_SEPARATION: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternName {
    Line,
    Triangle,
    Vee,
    TwoColumns,
}

impl PatternName {
    pub const ALL: [PatternName; 4] = [PatternName::Line, PatternName::Triangle, PatternName::Vee, PatternName::TwoColumns];

    pub fn code(self) -> u8 {
        match self {
            PatternName::Line => 0,
            PatternName::Triangle => 1,
            PatternName::Vee => 2,
            PatternName::TwoColumns => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PatternName::Line => "line",
            PatternName::Triangle => "triangle",
            PatternName::Vee => "vee",
            PatternName::TwoColumns => "two_columns",
        }
    }
}

impl std::str::FromStr for PatternName {
    type Err = PlanningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| PlanningError::UnknownPattern(s.to_string()))
    }
}

/// One member position in a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSlot {
    /// Member index of the leader this slot follows; `None` for leaders.
    pub leader: Option<usize>,
    /// For leaders, (along, cross) of their route relative to the reference
    /// route. For followers, the offset relative to their leader.
    pub offset: Vec2,
    pub altitude_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationPattern {
    pub name: PatternName,
    pub slots: Vec<PatternSlot>,
    pub leader_indices: Vec<usize>,
}

fn leader(offset: Vec2) -> PatternSlot {
    PatternSlot {
        leader: None,
        offset,
        altitude_offset: 0.0,
    }
}

fn follower(of: usize, offset: Vec2) -> PatternSlot {
    PatternSlot {
        leader: Some(of),
        offset,
        altitude_offset: 0.0,
    }
}

impl FormationPattern {
    /// Slot table for `n` members.
    pub fn build(name: PatternName, n: usize) -> Result<Self, PlanningError> {
        if n == 0 {
            return Err(PlanningError::SizeMismatch { group: 0, slots: 0 });
        }
        let mut slots = Vec::with_capacity(n);
        match name {
            PatternName::Line => {
                slots.push(leader(Vec2::ZERO));
                for k in 1..n {
                    let rank = k.div_ceil(2) as f64;
                    let side = if k % 2 == 1 { 1.0 } else { -1.0 };
                    slots.push(follower(0, Vec2::new(0.0, side * rank * LINE_SPACING)));
                }
            }
            PatternName::Vee => {
                slots.push(leader(Vec2::ZERO));
                for k in 1..n {
                    let rank = k.div_ceil(2) as f64;
                    let side = if k % 2 == 1 { 1.0 } else { -1.0 };
                    slots.push(follower(0, Vec2::new(-rank * VEE_STEP.x, side * rank * VEE_STEP.y)));
                }
            }
            PatternName::Triangle => {
                slots.push(leader(Vec2::ZERO));
                let mut row = 1;
                while slots.len() < n {
                    for j in 0..=row {
                        if slots.len() == n {
                            break;
                        }
                        let cross = (j as f64 - row as f64 / 2.0) * TRIANGLE_ROW_SPACING;
                        slots.push(follower(0, Vec2::new(-(row as f64) * RANK_SPACING, cross)));
                    }
                    row += 1;
                }
            }
            PatternName::TwoColumns => {
                if n >= TWO_LEADER_MIN_GROUP {
                    slots.push(leader(Vec2::new(0.0, COLUMN_HALF_WIDTH)));
                    slots.push(leader(Vec2::new(0.0, -COLUMN_HALF_WIDTH)));
                    for k in 0..n - 2 {
                        let rank = (k / 2 + 1) as f64;
                        slots.push(follower(k % 2, Vec2::new(-rank * RANK_SPACING, 0.0)));
                    }
                } else {
                    slots.push(leader(Vec2::ZERO));
                    for k in 0..n - 1 {
                        let rank = (k / 2 + 1) as f64;
                        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                        slots.push(follower(0, Vec2::new(-rank * RANK_SPACING, side * COLUMN_HALF_WIDTH)));
                    }
                }
            }
        }
        let leader_indices = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.leader.is_none())
            .map(|(i, _)| i)
            .collect();
        let pattern = Self {
            name,
            slots,
            leader_indices,
        };
        pattern.validate()?;
        Ok(pattern)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Nominal (along, cross) of each member relative to the reference point.
    pub fn layout(&self) -> Vec<Vec2> {
        self.slots
            .iter()
            .map(|s| match s.leader {
                None => s.offset,
                Some(l) => self.slots[l].offset + s.offset,
            })
            .collect()
    }

    pub fn min_separation(&self) -> f64 {
        let layout = self.layout();
        let mut best = f64::INFINITY;
        for i in 0..layout.len() {
            for j in i + 1..layout.len() {
                best = best.min(layout[i].distance(layout[j]));
            }
        }
        best
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if self.leader_indices.is_empty() {
            return Err(PlanningError::InvalidPattern("no leader".into()));
        }
        for (i, s) in self.slots.iter().enumerate() {
            if let Some(l) = s.leader {
                if l >= self.slots.len() || self.slots[l].leader.is_some() {
                    return Err(PlanningError::InvalidPattern(format!("slot {i} follows a non-leader")));
                }
            } else if !self.leader_indices.contains(&i) {
                return Err(PlanningError::InvalidPattern(format!("slot {i} is an undeclared leader")));
            }
        }
        if self.min_separation() < MIN_SLOT_SEPARATION {
            return Err(PlanningError::InvalidPattern("slots closer than 30 m".into()));
        }
        Ok(())
    }
}

fn line_intersection(p: Vec2, d: Vec2, q: Vec2, e: Vec2) -> Option<Vec2> {
    let den = d.cross(e);
    if den.abs() < 1e-9 {
        return None;
    }
    Some(p + d * ((q - p).cross(e) / den))
}

/// Shifts a chain of straight segments `cross` metres to the left, joining
/// consecutive legs at the intersection of their offset lines.
pub fn offset_route(route: &[PathSegment], cross: f64) -> Vec<PathSegment> {
    if cross == 0.0 {
        return route.to_vec();
    }
    let normal = |s: &PathSegment| match s.geometry {
        SegmentGeometry::Straight { start, end } => (end - start).normalized().map(|d| (d, d.perp_left() * cross)),
        SegmentGeometry::Orbit { .. } => None,
    };
    let mut out: Vec<PathSegment> = Vec::with_capacity(route.len());
    for (i, seg) in route.iter().enumerate() {
        let Some((dir, n)) = normal(seg) else {
            out.push(*seg);
            continue;
        };
        let mut shifted = seg.translated(n);
        let mut bevel = None;
        if let Some(prev) = out.last_mut() {
            if let (SegmentGeometry::Straight { start: ps, end: pe }, Some((pdir, _))) = (prev.geometry, normal(&route[i - 1])) {
                let joint = line_intersection(ps, pdir, shifted.start(), dir).filter(|j| {
                    j.distance(pe) < 4.0 * cross.abs() && pdir.dot(*j - ps) > 0.0 && dir.dot(shifted.end() - *j) > 0.0
                });
                match joint {
                    Some(joint) => {
                        prev.geometry = SegmentGeometry::Straight { start: ps, end: joint };
                        shifted.geometry = SegmentGeometry::Straight {
                            start: joint,
                            end: shifted.end(),
                        };
                    }
                    None if pe.distance(shifted.start()) > 1e-9 => {
                        bevel = Some(PathSegment::straight(pe, shifted.start(), seg.desired_speed, seg.desired_altitude));
                    }
                    None => {}
                }
            }
        }
        out.extend(bevel);
        out.push(shifted);
    }
    out
}

/// Per-member plans for `group` flying `pattern` along `reference_route`.
/// Member `group[i]` takes slot `i`.
pub fn plan_formation(
    group: &[u8],
    pattern: &FormationPattern,
    reference_route: &[PathSegment],
    task_base: u32,
) -> Result<Vec<TaskPlan>, PlanningError> {
    if group.len() != pattern.len() {
        return Err(PlanningError::SizeMismatch {
            group: group.len(),
            slots: pattern.len(),
        });
    }
    if reference_route.is_empty() {
        return Err(PlanningError::Degenerate("empty reference route".into()));
    }
    let mut plans = Vec::with_capacity(group.len());
    for (i, (&id, slot)) in group.iter().zip(&pattern.slots).enumerate() {
        let plan = match slot.leader {
            None => TaskPlan {
                task_id: task_base + i as u32,
                owner: id,
                segments: offset_route(reference_route, slot.offset.y),
                role: Role::Leader,
                formation_slot: None,
                standoff: None,
                blocking: true,
                coordinated: true,
            },
            Some(l) => TaskPlan {
                task_id: task_base + i as u32,
                owner: id,
                segments: offset_route(reference_route, pattern.slots[l].offset.y + slot.offset.y),
                role: Role::Follower,
                formation_slot: Some(FormationSlot {
                    leader_id: group[l],
                    offset: slot.offset,
                    altitude_offset: slot.altitude_offset,
                }),
                standoff: None,
                blocking: true,
                coordinated: false,
            },
        };
        plans.push(plan);
    }
    Ok(plans)
}
