//! Blocking and non-blocking task sequencing.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const DEFAULT_WATCHDOG: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledTask {
    pub task_id: u32,
    pub blocking: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleEvent {
    Activated { task_id: u32, time: f64 },
    Completed { task_id: u32, time: f64 },
    WatchdogTimeout { task_id: u32, time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    queue: VecDeque<ScheduledTask>,
    /// Blocking task in progress and its activation time.
    blocking: Option<(u32, f64)>,
    /// Tick index on which the last activation happened.
    last_activation: Option<u64>,
    active: Vec<u32>,
    pub watchdog: f64,
}

impl Default for Scheduler {
    fn default() -> Self {
        Self::new(DEFAULT_WATCHDOG)
    }
}

impl Scheduler {
    pub fn new(watchdog: f64) -> Self {
        Self {
            queue: VecDeque::new(),
            blocking: None,
            last_activation: None,
            active: Vec::new(),
            watchdog,
        }
    }

    pub fn load(&mut self, tasks: impl IntoIterator<Item = ScheduledTask>) {
        self.queue.extend(tasks);
    }

    /// Drops queued and running tasks.
    pub fn clear(&mut self) {
        self.queue.clear();
        self.blocking = None;
        self.active.clear();
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.blocking.is_none()
    }

    /// Completion event for a running task.
    pub fn complete(&mut self, task_id: u32, now: f64) -> Option<ScheduleEvent> {
        let pos = self.active.iter().position(|t| *t == task_id)?;
        self.active.remove(pos);
        if self.blocking.is_some_and(|(t, _)| t == task_id) {
            self.blocking = None;
        }
        Some(ScheduleEvent::Completed { task_id, time: now })
    }

    /// Advances one scheduler tick; at most one task activates per tick.
    pub fn tick(&mut self, tick: u64, now: f64) -> Vec<ScheduleEvent> {
        let mut events = Vec::new();
        if let Some((task_id, since)) = self.blocking {
            if now - since >= self.watchdog {
                self.blocking = None;
                self.active.retain(|t| *t != task_id);
                events.push(ScheduleEvent::WatchdogTimeout { task_id, time: now });
            } else {
                return events;
            }
        }
        if self.last_activation == Some(tick) {
            return events;
        }
        if let Some(next) = self.queue.pop_front() {
            self.active.push(next.task_id);
            if next.blocking {
                self.blocking = Some((next.task_id, now));
            }
            self.last_activation = Some(tick);
            events.push(ScheduleEvent::Activated {
                task_id: next.task_id,
                time: now,
            });
        }
        events
    }
}
