//! The ground station as a network node: workflow dispatch over the
//! latency-sensitive channel and link bookkeeping.

use super::workflow::{GcsEvent, RetryPolicy, WorkflowEngine};
use crate::geometry::Vec2;
use crate::sim::commander::Mode;
use crate::sim::config::GcsConfig;
use crate::swarmnet::message::{Heartbeat, SwarmMessage, GCS_SYSID};
use crate::swarmnet::{CommManager, Destination};
use std::collections::{BTreeMap, BTreeSet};

/// An agent unheard for this long no longer gates broadcast commands, s.
pub const LOST_AFTER: f64 = 5.0;
/// Period of the station's own heartbeat, which agents use for link supervision, s.
pub const BEACON_PERIOD: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct GroundStation {
    pub comm: CommManager,
    pub engine: WorkflowEngine,
    pub position: Vec2,
    roster: Vec<u8>,
    modes: BTreeMap<u8, u8>,
    next_beacon: f64,
}

impl GroundStation {
    pub fn new(cfg: &GcsConfig, roster: Vec<u8>) -> Self {
        let mut engine = WorkflowEngine::new(RetryPolicy {
            period: cfg.retry_period,
            max_attempts: cfg.max_attempts,
        });
        engine.ack_drops = cfg.ack_drops.iter().map(|d| (d.index, d.rounds)).collect();
        Self {
            comm: CommManager::new(GCS_SYSID),
            engine,
            position: cfg.position,
            roster,
            modes: BTreeMap::new(),
            next_beacon: 0.0,
        }
    }

    /// Seconds since the agent was last heard, or since the start of the run
    /// if it never was.
    pub fn link_age(&self, agent: u8, now: f64) -> f64 {
        now - self.comm.last_heard(agent).unwrap_or(0.0)
    }

    fn failsafe_agents(&self) -> BTreeSet<u8> {
        self.modes
            .iter()
            .filter(|(_, m)| Mode::from_code(**m) == Some(Mode::Failsafe))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Agents whose ACK a broadcast command waits for.
    pub fn required(&self, now: f64) -> BTreeSet<u8> {
        let failsafe = self.failsafe_agents();
        self.roster
            .iter()
            .copied()
            .filter(|id| !failsafe.contains(id))
            .filter(|id| match self.comm.last_heard(*id) {
                Some(t) => now - t <= LOST_AFTER,
                None => now <= LOST_AFTER,
            })
            .collect()
    }

    pub fn step(&mut self, now: f64) -> Vec<GcsEvent> {
        for r in self.comm.poll(now) {
            match r.msg {
                SwarmMessage::Ack(a) => self.engine.on_ack(r.from, &a, r.time),
                SwarmMessage::Heartbeat(h) => {
                    self.modes.insert(r.from, h.mode);
                }
                _ => {}
            }
        }
        if now >= self.next_beacon {
            self.next_beacon = now + BEACON_PERIOD;
            let hb = Heartbeat {
                time_ms: (now * 1000.0).round() as u32,
                position: [self.position.x as f32, self.position.y as f32],
                altitude: 0.0,
                airspeed: 0.0,
                course: 0.0,
                roll: 0.0,
                pitch: 0.0,
                battery: 200,
                mode: 0,
                group: 0xFF,
                role: 0,
            };
            self.comm
                .send(&SwarmMessage::Heartbeat(hb), Destination::Broadcast)
                .expect("heartbeat fits a frame");
        }
        let required = self.required(now);
        let ignore = self.failsafe_agents();
        for m in self.engine.tick(now, &required, &ignore) {
            self.comm
                .send(&SwarmMessage::Command(m), Destination::Broadcast)
                .expect("validated commands fit a frame");
        }
        self.engine.take_events()
    }
}
