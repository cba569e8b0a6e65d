//! Greedy auction allocation and the assignment merge used by gossip.

use super::mission::{CoordinationGroup, Task};
use super::CoordError;
use crate::geometry::Vec2;
use crate::swarmnet::message::AssignmentMsg;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Leader bids are scaled by this factor so nearer agents become leaders.
pub const LEADER_BID_WEIGHT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub mission_id: u16,
    pub group_id: u8,
    pub version: u32,
    pub proposer: u8,
    /// Task index → agent.
    pub awards: BTreeMap<u8, u8>,
}

impl Assignment {
    pub fn agent_for(&self, task: u8) -> Option<u8> {
        self.awards.get(&task).copied()
    }

    /// The ordered task list held by `agent`.
    pub fn tasks_of(&self, agent: u8) -> Vec<u8> {
        self.awards.iter().filter(|(_, a)| **a == agent).map(|(t, _)| *t).collect()
    }

    /// Every task is held by exactly one member and no member holds two.
    pub fn is_exactly_once(&self, tasks: &BTreeSet<u8>, members: &[u8]) -> bool {
        let held: BTreeSet<u8> = self.awards.keys().copied().collect();
        let mut holders = BTreeSet::new();
        held == *tasks && self.awards.values().all(|a| members.contains(a) && holders.insert(*a))
    }

    pub fn to_msg(&self) -> AssignmentMsg {
        AssignmentMsg {
            mission_id: self.mission_id,
            group_id: self.group_id,
            version: self.version,
            proposer: self.proposer,
            awards: self.awards.iter().map(|(t, a)| (*t, *a)).collect(),
        }
    }

    pub fn from_msg(m: &AssignmentMsg) -> Self {
        Self {
            mission_id: m.mission_id,
            group_id: m.group_id,
            version: m.version,
            proposer: m.proposer,
            awards: m.awards.iter().copied().collect(),
        }
    }
}

pub fn bid(task: &Task, position: Option<Vec2>) -> f64 {
    match position {
        Some(p) if p.is_finite() => {
            let d = p.distance(task.start);
            if task.is_lead() {
                d * LEADER_BID_WEIGHT
            } else {
                d
            }
        }
        _ => f64::INFINITY,
    }
}

/// Total bid cost of the awards.
pub fn assignment_cost(tasks: &[Task], awards: &BTreeMap<u8, u8>, positions: &BTreeMap<u8, Vec2>) -> f64 {
    tasks
        .iter()
        .filter_map(|t| awards.get(&t.index).map(|a| bid(t, positions.get(a).copied())))
        .sum()
}

/// Sequential greedy auction: tasks in priority order, each to the cheapest
/// unassigned member, ties to the lower id. Winners then trade tasks
/// pairwise while a trade lowers the total cost.
pub fn allocate(
    mission_id: u16,
    tasks: &[Task],
    group: &CoordinationGroup,
    positions: &BTreeMap<u8, Vec2>,
    proposer: u8,
) -> Result<Assignment, CoordError> {
    if tasks.len() != group.members.len() {
        return Err(CoordError::TaskCountMismatch {
            tasks: tasks.len(),
            members: group.members.len(),
        });
    }
    let mut order: Vec<&Task> = tasks.iter().collect();
    order.sort_by_key(|t| (t.priority, t.index));
    let any_finite = tasks
        .iter()
        .any(|t| group.members.iter().any(|m| bid(t, positions.get(m).copied()).is_finite()));
    if !tasks.is_empty() && !any_finite {
        return Err(CoordError::NoBids);
    }
    let mut free: BTreeSet<u8> = group.members.iter().copied().collect();
    let mut awards = BTreeMap::new();
    for task in order {
        let winner = free
            .iter()
            .copied()
            .min_by(|a, b| {
                bid(task, positions.get(a).copied())
                    .total_cmp(&bid(task, positions.get(b).copied()))
                    .then(a.cmp(b))
            })
            .expect("one free member per task");
        free.remove(&winner);
        awards.insert(task.index, winner);
    }
    exchange(tasks, &mut awards, positions);
    Ok(Assignment {
        mission_id,
        group_id: group.group_id,
        version: 1,
        proposer,
        awards,
    })
}

/// Pairwise task trades between award holders while any trade lowers the
/// total bid cost. Pairs are visited in index order so the result is
/// deterministic.
fn exchange(tasks: &[Task], awards: &mut BTreeMap<u8, u8>, positions: &BTreeMap<u8, Vec2>) {
    let cost = |t: &Task, a: u8| bid(t, positions.get(&a).copied());
    for _ in 0..tasks.len() * tasks.len() {
        let mut improved = false;
        for i in 0..tasks.len() {
            for j in i + 1..tasks.len() {
                let (ti, tj) = (&tasks[i], &tasks[j]);
                let (ai, aj) = (awards[&ti.index], awards[&tj.index]);
                let now = cost(ti, ai) + cost(tj, aj);
                let swapped = cost(ti, aj) + cost(tj, ai);
                if swapped.is_finite() && swapped < now - 1e-9 {
                    awards.insert(ti.index, aj);
                    awards.insert(tj.index, ai);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Gives every task without a holder, and every surplus task of a member
/// holding several, to the free members in ascending id order.
fn rebalance(awards: &mut BTreeMap<u8, u8>, tasks: &BTreeSet<u8>, members: &[u8]) {
    let mut seen = BTreeSet::new();
    let mut orphans: Vec<u8> = Vec::new();
    awards.retain(|t, a| tasks.contains(t) && members.contains(a));
    for (t, a) in awards.clone() {
        if !seen.insert(a) {
            awards.remove(&t);
            orphans.push(t);
        }
    }
    orphans.extend(tasks.iter().filter(|t| !awards.contains_key(t)));
    orphans.sort_unstable();
    orphans.dedup();
    let mut free: Vec<u8> = members.iter().copied().filter(|m| !seen.contains(m)).collect();
    free.sort_unstable();
    for (t, a) in orphans.into_iter().zip(free) {
        awards.insert(t, a);
    }
}

/// Merge of two views of the same mission and group.
///
/// The higher version wins outright. At equal versions with different
/// contents each task keeps the lower agent id; left-over conflicts are
/// rebalanced by id rank and the version is bumped.
pub fn resolve_conflict(local: &Assignment, remote: &Assignment, tasks: &BTreeSet<u8>, members: &[u8]) -> Assignment {
    if local == remote {
        return local.clone();
    }
    if remote.version != local.version {
        return if remote.version > local.version { remote.clone() } else { local.clone() };
    }
    if local.awards == remote.awards {
        let mut out = local.clone();
        out.proposer = local.proposer.min(remote.proposer);
        return out;
    }
    let mut awards = local.awards.clone();
    for (t, a) in &remote.awards {
        awards.entry(*t).and_modify(|mine| *mine = (*mine).min(*a)).or_insert(*a);
    }
    rebalance(&mut awards, tasks, members);
    Assignment {
        mission_id: local.mission_id,
        group_id: local.group_id,
        version: local.version + 1,
        proposer: local.proposer.min(remote.proposer),
        awards,
    }
}

/// Removes `lost` from the assignment. Its task passes to the holder of the
/// lowest-priority task, whose own task is dropped.
pub fn reassign_lost(assignment: &Assignment, tasks: &[Task], lost: u8, proposer: u8) -> Assignment {
    let mut out = assignment.clone();
    let Some(orphan) = assignment.awards.iter().find(|(_, a)| **a == lost).map(|(t, _)| *t) else {
        return out;
    };
    out.awards.remove(&orphan);
    let rank = |t: u8| tasks.iter().find(|x| x.index == t).map_or((u8::MAX, t), |x| (x.priority, x.index));
    if let Some(last) = out.awards.keys().copied().max_by_key(|t| rank(*t)) {
        if rank(last) > rank(orphan) {
            let holder = out.awards.remove(&last).expect("present");
            out.awards.insert(orphan, holder);
        }
    }
    out.version += 1;
    out.proposer = proposer;
    out
}
