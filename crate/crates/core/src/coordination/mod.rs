//! Coordination layer: group management, mission decomposition, allocation,
//! conflict resolution and task scheduling. Every agent runs the same code on
//! its own view of the swarm.

pub mod allocate;
pub mod mission;
pub mod scheduler;

pub use allocate::{allocate, assignment_cost, reassign_lost, resolve_conflict, Assignment};
pub use mission::{decompose, form_groups, CoordinationGroup, Mission, MissionKind, MissionParams, Task, TaskKind};
pub use scheduler::{ScheduleEvent, ScheduledTask, Scheduler};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoordError {
    #[error("mission {0}: {1}")]
    InvalidMission(u16, String),
    #[error("group has no members")]
    EmptyGroup,
    #[error("{tasks} tasks for {members} members")]
    TaskCountMismatch { tasks: usize, members: usize },
    #[error("no member can bid on any task")]
    NoBids,
}
