//! Launch/land rates and formation position error.

use crate::geometry::Vec2;
use crate::swarmnet::{CommCounters, NetCounters};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no formation samples in window [{0}, {1}]")]
    NoFormation(f64, f64),
    #[error("no events recorded")]
    Empty,
}

/// Mean inter-event time written as a sum of consecutive differences.
/// `taus` are times since the command, in order of occurrence.
pub fn rate_literal(taus: &[f64]) -> Option<f64> {
    let n = taus.len();
    if n == 0 {
        return None;
    }
    let mut sum = taus[0];
    for i in 1..n {
        sum += taus[i] - taus[i - 1];
    }
    Some(sum / n as f64)
}

/// The same mean in closed form: last time over count.
pub fn rate_telescoped(taus: &[f64]) -> Option<f64> {
    taus.last().map(|t| t / taus.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub literal: f64,
    pub telescoped: f64,
    pub n: usize,
    pub expected: usize,
    /// Fewer events than agents: the rate covers only those that completed.
    pub partial: bool,
}

pub fn rate_report(taus: &[f64], expected: usize) -> Option<RateReport> {
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(RateReport {
        literal: rate_literal(&sorted)?,
        telescoped: rate_telescoped(&sorted)?,
        n: sorted.len(),
        expected,
        partial: sorted.len() < expected,
    })
}

/// Mean distance between desired and real positions at one instant.
pub fn mpe(pairs: &[(Vec2, Vec2)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().map(|(d, r)| d.distance(*r)).sum::<f64>() / pairs.len() as f64)
}

/// Time average of per-instant MPE values.
pub fn ampe(mpes: &[f64]) -> Option<f64> {
    if mpes.is_empty() {
        return None;
    }
    Some(mpes.iter().sum::<f64>() / mpes.len() as f64)
}

/// Streaming AMPE: one MPE per timestamp, restricted to an optional window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AmpeAccumulator {
    pub window: Option<[f64; 2]>,
    sum: f64,
    samples: u64,
    current_t: Option<f64>,
    current: Vec<f64>,
    pub last_mpe: Option<f64>,
}

impl AmpeAccumulator {
    pub fn new(window: Option<[f64; 2]>) -> Self {
        Self { window, ..Self::default() }
    }

    fn in_window(&self, t: f64) -> bool {
        self.window.is_none_or(|[a, b]| t >= a && t <= b)
    }

    /// One agent's error at time `t`. Errors with equal `t` form one MPE sample.
    pub fn push(&mut self, t: f64, error: f64) {
        if !self.in_window(t) {
            return;
        }
        if self.current_t != Some(t) {
            self.flush();
            self.current_t = Some(t);
        }
        self.current.push(error);
    }

    fn flush(&mut self) {
        if !self.current.is_empty() {
            let m = self.current.iter().sum::<f64>() / self.current.len() as f64;
            self.sum += m;
            self.samples += 1;
            self.last_mpe = Some(m);
            self.current.clear();
        }
    }

    pub fn samples(&self) -> u64 {
        self.samples + u64::from(!self.current.is_empty())
    }

    pub fn value(&self) -> Option<f64> {
        let mut c = self.clone();
        c.flush();
        (c.samples > 0).then(|| c.sum / c.samples as f64)
    }

    pub fn finish(&self) -> Result<f64, MetricsError> {
        let [a, b] = self.window.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
        self.value().ok_or(MetricsError::NoFormation(a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration: f64,
    pub ampe: Option<f64>,
    pub ampe_samples: u64,
    pub launch: Option<RateReport>,
    pub land: Option<RateReport>,
    pub net: NetCounters,
    /// Receive-side counters summed over every node.
    pub comm: CommCounters,
    pub conservation_ok: bool,
    /// Ticks where an agent produced actuator output while in a non-actuating mode.
    pub safety_violations: u64,
    pub transitions: u64,
    pub rejections: u64,
    pub digest: String,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("report serializes")
    }
}
