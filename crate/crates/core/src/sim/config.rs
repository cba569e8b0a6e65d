//! Scenario files: a versioned TOML schema describing fleet, script, wind,
//! channels, targets and ground-station policy.

use crate::airframe::{PlatformConfig, WindField};
use crate::coordination::scheduler::DEFAULT_WATCHDOG;
use crate::gcs::{FailsafePolicy, HighLevelCommand};
use crate::geometry::{Polygon, Vec2};
use crate::guidance::GuidanceGains;
use crate::swarmnet::message::{BROADCAST, GCS_SYSID};
use crate::swarmnet::ChannelSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub lowlevel_hz: u32,
    pub guidance_hz: u32,
    pub coordination_hz: u32,
    pub heartbeat_hz: u32,
    /// Agent samples written to the run log per second.
    pub log_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            lowlevel_hz: 20,
            guidance_hz: 10,
            coordination_hz: 2,
            heartbeat_hz: 5,
            log_hz: 20,
        }
    }
}

impl Rates {
    pub fn dt(&self) -> f64 {
        1.0 / self.lowlevel_hz as f64
    }

    /// Low-level ticks per period of a rate.
    pub fn divisor(&self, hz: u32) -> u64 {
        (self.lowlevel_hz / hz.max(1)) as u64
    }
}

/// A platform given by shipped name or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlatformRef {
    Named(String),
    Inline(Box<PlatformConfig>),
}

impl PlatformRef {
    pub fn resolve(&self) -> Result<PlatformConfig, String> {
        match self {
            PlatformRef::Named(n) => match n.as_str() {
                "fixed_wing" => Ok(PlatformConfig::fixed_wing()),
                "tilt_rotor" => Ok(PlatformConfig::tilt_rotor()),
                other => Err(format!("unknown platform {other:?}")),
            },
            PlatformRef::Inline(p) => Ok((**p).clone()),
        }
    }
}

fn fixed_wing_ref() -> PlatformRef {
    PlatformRef::Named("fixed_wing".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetEntry {
    pub id: u8,
    #[serde(default = "fixed_wing_ref")]
    pub platform: PlatformRef,
    pub home: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaunchConfig {
    /// Runway heading, rad.
    pub heading: f64,
    pub taxi_distance: f64,
    /// Altitude at which a climbing vehicle counts as airborne, m.
    pub airborne_altitude: f64,
    /// Sink rate on the final approach, m/s.
    pub sink_rate: f64,
}

impl Default for LaunchConfig {
    fn default() -> Self {
        Self {
            heading: 0.0,
            taxi_distance: 20.0,
            airborne_altitude: 80.0,
            sink_rate: 2.5,
        }
    }
}

/// Loiter stations: one per fleet member on a grid, in roster order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationGrid {
    pub origin: Vec2,
    pub spacing: f64,
    pub radius: f64,
    pub altitude: f64,
    /// Columns of the grid; 0 picks a square-ish layout.
    pub columns: usize,
}

impl Default for StationGrid {
    fn default() -> Self {
        Self {
            origin: Vec2::new(0.0, 600.0),
            spacing: 250.0,
            radius: 80.0,
            altitude: 100.0,
            columns: 0,
        }
    }
}

impl StationGrid {
    pub fn station(&self, rank: usize, fleet: usize) -> Vec2 {
        let cols = if self.columns > 0 {
            self.columns
        } else {
            (fleet as f64).sqrt().ceil().max(1.0) as usize
        };
        self.origin + Vec2::new((rank % cols) as f64, (rank / cols) as f64) * self.spacing
    }
}

/// A workflow submitted to the ground station at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub at: f64,
    #[serde(default)]
    pub failsafe: FailsafePolicy,
    pub commands: Vec<HighLevelCommand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channels {
    pub sensitive: ChannelSpec,
    pub insensitive: ChannelSpec,
}

impl Default for Channels {
    fn default() -> Self {
        Self {
            sensitive: ChannelSpec::latency_sensitive(),
            insensitive: ChannelSpec::latency_insensitive(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoordinationConfig {
    pub group_size: usize,
    /// A group member unheard for this long is lost and its task reassigned, s.
    pub member_timeout: f64,
    pub watchdog: f64,
    /// Loss of every message from the ground station for this long triggers RTL; 0 disables, s.
    pub link_lost_timeout: f64,
    /// Coverage track spacing for target search, m.
    pub track_spacing: f64,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        Self {
            group_size: 7,
            member_timeout: 5.0,
            watchdog: DEFAULT_WATCHDOG,
            link_lost_timeout: 0.0,
            track_spacing: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub footprint: f64,
    pub noise_stddev: f64,
    /// Reports older than this are left out of the fused estimate, s.
    pub fusion_window: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            footprint: 150.0,
            noise_stddev: 2.0,
            fusion_window: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityChange {
    pub at: f64,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub id: u8,
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
    /// Later velocity changes, in time order.
    #[serde(default)]
    pub changes: Vec<VelocityChange>,
    #[serde(default)]
    pub shelters: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcsConfig {
    pub position: Vec2,
    pub retry_period: f64,
    pub max_attempts: u32,
    /// ACKs for workflow command `index` are discarded while its attempt count is at most `rounds`.
    pub ack_drops: Vec<AckDrop>,
    /// Telemetry snapshot period, s.
    pub snapshot_period: f64,
}

impl Default for GcsConfig {
    fn default() -> Self {
        Self {
            position: Vec2::ZERO,
            retry_period: 2.0,
            max_attempts: 5,
            ack_drops: Vec::new(),
            snapshot_period: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckDrop {
    /// Position of the command in ground-station dispatch order, from 0.
    pub index: usize,
    pub rounds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The vehicle disappears from the network and stops.
    Kill,
    /// A fault event is raised on the vehicle's commander.
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub at: f64,
    pub agent: u8,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// AMPE averaging window `[start, end]`, s; `None` uses every formation sample.
    pub formation_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default)]
    pub rates: Rates,
    pub fleet: Vec<FleetEntry>,
    /// Start every vehicle in MISSION, orbiting its station.
    #[serde(default)]
    pub start_airborne: bool,
    #[serde(default)]
    pub launch: LaunchConfig,
    #[serde(default)]
    pub stations: StationGrid,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub wind: WindField,
    #[serde(default)]
    pub channels: Channels,
    #[serde(default)]
    pub coordination: CoordinationConfig,
    #[serde(default)]
    pub gains: GuidanceGains,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub gcs: GcsConfig,
    #[serde(default)]
    pub faults: Vec<FaultConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Fleet ids in ascending order.
    pub fn roster(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self.fleet.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Every problem with the scenario, or `Ok` if there are none.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            errs.push(format!(
                "schema_version {} is not supported (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            errs.push("duration must be positive".into());
        }
        let r = &self.rates;
        if r.lowlevel_hz < 10 {
            errs.push("lowlevel_hz must be at least 10".into());
        }
        for (name, hz) in [
            ("guidance_hz", r.guidance_hz),
            ("coordination_hz", r.coordination_hz),
            ("heartbeat_hz", r.heartbeat_hz),
            ("log_hz", r.log_hz),
        ] {
            if hz == 0 || hz > r.lowlevel_hz || r.lowlevel_hz % hz != 0 {
                errs.push(format!("{name} = {hz} must divide lowlevel_hz = {}", r.lowlevel_hz));
            }
        }
        if self.fleet.is_empty() {
            errs.push("fleet is empty".into());
        }
        let mut seen = BTreeSet::new();
        let mut min_speed = f64::INFINITY;
        for f in &self.fleet {
            if f.id == GCS_SYSID || f.id == BROADCAST {
                errs.push(format!("agent id {} is reserved", f.id));
            }
            if !seen.insert(f.id) {
                errs.push(format!("agent id {} is not unique", f.id));
            }
            if !f.home.is_finite() {
                errs.push(format!("agent {} home is not finite", f.id));
            }
            match f.platform.resolve() {
                Ok(p) => match p.validate() {
                    Ok(()) => min_speed = min_speed.min(p.min_speed),
                    Err(e) => errs.push(format!("agent {}: {e}", f.id)),
                },
                Err(e) => errs.push(format!("agent {}: {e}", f.id)),
            }
        }
        let l = &self.launch;
        if !(l.taxi_distance > 0.0 && l.airborne_altitude > 0.0 && l.sink_rate > 0.0 && l.heading.is_finite()) {
            errs.push("launch parameters must be positive".into());
        }
        let s = &self.stations;
        if !(s.spacing > 0.0 && s.radius > 0.0 && s.altitude > 0.0 && s.origin.is_finite()) {
            errs.push("station grid parameters must be positive".into());
        }
        if s.altitude <= l.airborne_altitude {
            errs.push("station altitude must exceed the airborne altitude".into());
        }
        let mut last = 0.0;
        for (i, e) in self.script.iter().enumerate() {
            if !(e.at.is_finite() && e.at >= 0.0) {
                errs.push(format!("script entry {i}: time must be non-negative"));
            }
            if e.at < last {
                errs.push(format!("script entry {i}: entries must be in time order"));
            }
            last = e.at;
            if e.commands.is_empty() {
                errs.push(format!("script entry {i}: no commands"));
            }
            for c in &e.commands {
                if let Err(why) = c.validate() {
                    errs.push(format!("script entry {i}: {why}"));
                }
            }
        }
        for (name, spec) in [("sensitive", &self.channels.sensitive), ("insensitive", &self.channels.insensitive)] {
            if let Err(e) = spec.validate() {
                errs.push(format!("{name} channel: {e}"));
            }
        }
        let c = &self.coordination;
        if c.group_size == 0 || !(c.member_timeout > 0.0) || !(c.watchdog > 0.0) || !(c.link_lost_timeout >= 0.0) || !(c.track_spacing > 0.0) {
            errs.push("coordination parameters must be positive".into());
        }
        let w = &self.wind;
        if !(w.mean_velocity.is_finite() && w.gust_stddev.is_finite() && w.gust_stddev >= 0.0) {
            errs.push("wind must be finite with non-negative gust stddev".into());
        }
        let sn = &self.sensor;
        if !(sn.footprint > 0.0 && sn.noise_stddev >= 0.0 && sn.fusion_window > 0.0) {
            errs.push("sensor parameters must be positive".into());
        }
        let mut target_ids = BTreeSet::new();
        for t in &self.targets {
            if !target_ids.insert(t.id) {
                errs.push(format!("target id {} is not unique", t.id));
            }
            let speeds = std::iter::once(t.velocity).chain(t.changes.iter().map(|c| c.velocity));
            for v in speeds {
                if !(v.is_finite() && v.norm() < min_speed) {
                    errs.push(format!("target {} speed must stay below the slowest UAV speed", t.id));
                }
            }
            if t.changes.windows(2).any(|w| w[1].at < w[0].at) {
                errs.push(format!("target {} velocity changes must be in time order", t.id));
            }
            if t.shelters.iter().any(|p| p.vertices.len() < 3 || !p.is_simple()) {
                errs.push(format!("target {} shelter must be a simple polygon", t.id));
            }
        }
        let g = &self.gcs;
        if !(g.retry_period > 0.0 && g.max_attempts > 0 && g.snapshot_period > 0.0 && g.position.is_finite()) {
            errs.push("gcs parameters must be positive".into());
        }
        for f in &self.faults {
            if !seen.contains(&f.agent) {
                errs.push(format!("fault names unknown agent {}", f.agent));
            }
        }
        if let Some([a, b]) = self.metrics.formation_window {
            if !(a.is_finite() && b.is_finite() && a < b) {
                errs.push("formation window must be an increasing pair".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }
}
