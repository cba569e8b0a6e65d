//! Newline-delimited JSON run log with a streaming SHA-256 digest, and the
//! metric accumulator that can be fed from a live run or a saved file.

use super::commander::{Event, Mode};
use super::config::ScenarioConfig;
use super::metrics::{rate_report, AmpeAccumulator, MetricsReport};
use crate::airframe::VehicleState;
use crate::gcs::GcsEvent;
use crate::geometry::Vec2;
use crate::guidance::GuidanceCommand;
use crate::planning::Role;
use crate::swarmnet::{CommCounters, NetCounters};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{self, BufRead, Write};

pub const RUNLOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Record {
    Header {
        version: u32,
        scenario: Box<ScenarioConfig>,
    },
    Sample {
        t: f64,
        id: u8,
        mode: Mode,
        state: VehicleState,
        cmd: Option<GuidanceCommand>,
        actuators: Vec<f64>,
        /// Desired position when the agent holds a formation task.
        desired: Option<Vec2>,
        group: Option<u8>,
        role: Option<Role>,
        battery: f64,
    },
    Transition {
        t: f64,
        id: u8,
        from: Mode,
        to: Mode,
        event: Event,
    },
    Rejection {
        t: f64,
        id: u8,
        mode: Mode,
        event: Event,
    },
    Aloft {
        t: f64,
        id: u8,
        /// Seconds since the launch command was issued.
        tau: f64,
    },
    Touchdown {
        t: f64,
        id: u8,
        tau: f64,
    },
    Event {
        t: f64,
        id: Option<u8>,
        name: String,
        detail: String,
    },
    Gcs {
        t: f64,
        event: GcsEvent,
    },
    Net {
        t: f64,
        counters: NetCounters,
        pending: u64,
        comm: CommCounters,
    },
    End {
        t: f64,
    },
}

impl Record {
    pub fn time(&self) -> f64 {
        match self {
            Record::Header { .. } => 0.0,
            Record::Sample { t, .. }
            | Record::Transition { t, .. }
            | Record::Rejection { t, .. }
            | Record::Aloft { t, .. }
            | Record::Touchdown { t, .. }
            | Record::Event { t, .. }
            | Record::Gcs { t, .. }
            | Record::Net { t, .. }
            | Record::End { t } => *t,
        }
    }
}

pub fn parse_record(line: &str) -> Result<Record, serde_json::Error> {
    serde_json::from_str(line)
}

/// Every frame sent is delivered, dropped or still pending.
pub fn conserved(c: &NetCounters, pending: u64) -> bool {
    c.sent == c.delivered + c.dropped_range + c.dropped_loss + c.dropped_overflow + pending
}

/// Metrics recomputed from records alone.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    scenario: String,
    seed: u64,
    duration: f64,
    expected: usize,
    ampe: AmpeAccumulator,
    launch: Vec<f64>,
    land: Vec<f64>,
    net: NetCounters,
    comm: CommCounters,
    conservation_ok: bool,
    safety_violations: u64,
    transitions: u64,
    rejections: u64,
}

impl MetricsAccumulator {
    pub fn observe(&mut self, r: &Record) {
        match r {
            Record::Header { scenario, .. } => {
                self.scenario = scenario.name.clone();
                self.seed = scenario.seed;
                self.duration = scenario.duration;
                self.expected = scenario.fleet.len();
                self.ampe = AmpeAccumulator::new(scenario.metrics.formation_window);
                self.conservation_ok = true;
            }
            Record::Sample {
                t,
                mode,
                state,
                actuators,
                desired,
                ..
            } => {
                if let Some(d) = desired {
                    self.ampe.push(*t, d.distance(state.position));
                }
                if !mode.actuates() && actuators.iter().any(|a| *a != 0.0) {
                    self.safety_violations += 1;
                }
            }
            Record::Transition { .. } => self.transitions += 1,
            Record::Rejection { .. } => self.rejections += 1,
            Record::Aloft { tau, .. } => self.launch.push(*tau),
            Record::Touchdown { tau, .. } => self.land.push(*tau),
            Record::Net { counters, pending, comm, .. } => {
                self.net = *counters;
                self.comm = *comm;
                self.conservation_ok &= conserved(counters, *pending);
            }
            Record::Event { .. } | Record::Gcs { .. } | Record::End { .. } => {}
        }
    }

    pub fn ampe(&self) -> &AmpeAccumulator {
        &self.ampe
    }

    pub fn launched(&self) -> usize {
        self.launch.len()
    }

    pub fn landed(&self) -> usize {
        self.land.len()
    }

    pub fn launch_rate(&self) -> Option<f64> {
        rate_report(&self.launch, self.expected).map(|r| r.telescoped)
    }

    pub fn land_rate(&self) -> Option<f64> {
        rate_report(&self.land, self.expected).map(|r| r.telescoped)
    }

    pub fn report(&self, digest: String) -> MetricsReport {
        MetricsReport {
            scenario: self.scenario.clone(),
            seed: self.seed,
            duration: self.duration,
            ampe: self.ampe.value(),
            ampe_samples: self.ampe.samples(),
            launch: rate_report(&self.launch, self.expected),
            land: rate_report(&self.land, self.expected),
            net: self.net,
            comm: self.comm,
            conservation_ok: self.conservation_ok,
            safety_violations: self.safety_violations,
            transitions: self.transitions,
            rejections: self.rejections,
            digest,
        }
    }
}

/// Append-only log sink. Records are hashed as serialized, newline included.
pub struct RunLog {
    hasher: Sha256,
    writer: Option<Box<dyn Write + Send>>,
    kept: Option<Vec<Record>>,
    metrics: MetricsAccumulator,
    records: u64,
    last_t: f64,
    line: Vec<u8>,
}

impl std::fmt::Debug for RunLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLog").field("records", &self.records).field("last_t", &self.last_t).finish()
    }
}

impl Default for RunLog {
    fn default() -> Self {
        Self::new()
    }
}

impl RunLog {
    pub fn new() -> Self {
        Self {
            hasher: Sha256::new(),
            writer: None,
            kept: None,
            metrics: MetricsAccumulator::default(),
            records: 0,
            last_t: 0.0,
            line: Vec::with_capacity(512),
        }
    }

    pub fn with_writer(mut self, w: Box<dyn Write + Send>) -> Self {
        self.writer = Some(w);
        self
    }

    /// Keep every record in memory as well.
    pub fn keeping(mut self) -> Self {
        self.kept = Some(Vec::new());
        self
    }

    pub fn append(&mut self, r: Record) -> io::Result<()> {
        let t = r.time();
        debug_assert!(t >= self.last_t, "log time went backwards: {t} < {}", self.last_t);
        self.last_t = self.last_t.max(t);
        self.line.clear();
        serde_json::to_writer(&mut self.line, &r).map_err(io::Error::other)?;
        self.line.push(b'\n');
        self.hasher.update(&self.line);
        if let Some(w) = self.writer.as_mut() {
            w.write_all(&self.line)?;
        }
        self.metrics.observe(&r);
        if let Some(k) = self.kept.as_mut() {
            k.push(r);
        }
        self.records += 1;
        Ok(())
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn kept(&self) -> Option<&[Record]> {
        self.kept.as_deref()
    }

    pub fn take_kept(&mut self) -> Vec<Record> {
        self.kept.take().unwrap_or_default()
    }

    /// Current digest; the log can keep growing afterwards.
    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Record { line: usize, source: serde_json::Error },
    #[error("line {0}: time goes backwards")]
    NonMonotone(usize),
    #[error("log does not start with a header")]
    NoHeader,
}

#[derive(Debug)]
pub struct Replayed {
    pub scenario: ScenarioConfig,
    pub digest: String,
    pub records: u64,
    pub report: MetricsReport,
}

/// Reads a saved log, checks its ordering and recomputes digest and metrics.
pub fn replay<R: BufRead>(reader: R) -> Result<Replayed, ReplayError> {
    let mut hasher = Sha256::new();
    let mut acc = MetricsAccumulator::default();
    let mut scenario = None;
    let mut last_t = 0.0;
    let mut records = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let r = parse_record(&line).map_err(|source| ReplayError::Record { line: i + 1, source })?;
        if records == 0 {
            match &r {
                Record::Header { scenario: s, .. } => scenario = Some((**s).clone()),
                _ => return Err(ReplayError::NoHeader),
            }
        }
        if r.time() < last_t {
            return Err(ReplayError::NonMonotone(i + 1));
        }
        last_t = r.time();
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        acc.observe(&r);
        records += 1;
    }
    let scenario = scenario.ok_or(ReplayError::NoHeader)?;
    let digest = hex::encode(hasher.finalize());
    Ok(Replayed {
        scenario,
        report: acc.report(digest.clone()),
        digest,
        records,
    })
}
