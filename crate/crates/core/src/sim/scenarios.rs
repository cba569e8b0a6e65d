//! Built-in scenarios used by the CLI and the acceptance suite.

use super::config::*;
use super::sequencer::{fitted_spacing, taxi_time};
use crate::airframe::{PlatformConfig, WindField};
use crate::gcs::{FailsafePolicy, HighLevelCommand};
use crate::geometry::{Polygon, Vec2};
use crate::planning::PatternName;
use crate::swarmnet::ChannelSpec;

pub const BUILTIN: &[&str] = &[
    "launch21",
    "formation21",
    "formation21_gusts",
    "standoff_static",
    "standoff_moving",
    "standoff_shelter",
    "coordination7",
    "sortie7",
];

/// Last liftoff time of the reference 21-vehicle launch, s after the command.
pub const REFERENCE_LAST_LIFTOFF: f64 = 110.43;
pub const DEFAULT_GUST_STDDEV: f64 = 1.5;
pub const FORMATION_SPEED: f64 = 17.0;
pub const STANDOFF_RADIUS: f64 = 100.0;
pub const STANDOFF_TARGET: Vec2 = Vec2::new(600.0, 900.0);

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    Some(match name {
        "launch21" => launch(21),
        "formation21" => formation(21, 0.0),
        "formation21_gusts" => formation(21, DEFAULT_GUST_STDDEV),
        "standoff_static" => standoff(false, false),
        "standoff_moving" => standoff(true, false),
        "standoff_shelter" => standoff(false, true),
        "coordination7" => coordination(7, 0.2),
        "sortie7" => sortie(7),
        _ => return None,
    })
}

fn base(name: &str, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCENARIO_SCHEMA_VERSION,
        name: name.to_string(),
        seed: 1,
        duration,
        rates: Rates::default(),
        fleet: Vec::new(),
        start_airborne: false,
        launch: LaunchConfig::default(),
        stations: StationGrid::default(),
        script: Vec::new(),
        wind: WindField::calm(),
        channels: Channels {
            sensitive: ChannelSpec {
                range: 20_000.0,
                ..ChannelSpec::latency_sensitive()
            },
            insensitive: ChannelSpec {
                range: 20_000.0,
                ..ChannelSpec::latency_insensitive()
            },
        },
        coordination: CoordinationConfig::default(),
        gains: Default::default(),
        sensor: SensorConfig::default(),
        targets: Vec::new(),
        gcs: GcsConfig::default(),
        faults: Vec::new(),
        metrics: MetricsConfig::default(),
    }
}

fn fleet(n: usize, home: Vec2) -> Vec<FleetEntry> {
    (1..=n as u8)
        .map(|id| FleetEntry {
            id,
            platform: PlatformRef::Named("fixed_wing".into()),
            home,
        })
        .collect()
}

fn at(t: f64, commands: Vec<HighLevelCommand>) -> ScriptEntry {
    ScriptEntry {
        at: t,
        failsafe: FailsafePolicy::AbortQueue,
        commands,
    }
}

/// Spacing that reproduces the reference last-liftoff time for `n` vehicles.
pub fn reference_spacing(n: usize) -> f64 {
    let taxi = taxi_time(LaunchConfig::default().taxi_distance, PlatformConfig::fixed_wing().min_speed);
    fitted_spacing(n, REFERENCE_LAST_LIFTOFF, taxi)
}

/// `n` vehicles launched one by one from a single runway.
pub fn launch(n: usize) -> ScenarioConfig {
    let spacing = reference_spacing(21);
    let mut c = base(&format!("launch{n}"), (n.saturating_sub(1)) as f64 * spacing + 10.0);
    c.fleet = fleet(n, Vec2::ZERO);
    c.script = vec![at(0.0, vec![HighLevelCommand::Launch { lead: 0.0, spacing }])];
    c
}

/// Airborne fleet flying one straight route in two-column formation.
pub fn formation(n: usize, gust_stddev: f64) -> ScenarioConfig {
    let suffix = if gust_stddev > 0.0 { "_gusts" } else { "" };
    let mut c = base(&format!("formation{n}{suffix}"), 600.0);
    c.fleet = fleet(n, Vec2::ZERO);
    c.start_airborne = true;
    c.wind.gust_stddev = gust_stddev;
    c.wind.seed = 7;
    c.metrics.formation_window = Some([400.0, 600.0]);
    c.coordination.watchdog = 1200.0;
    c.script = vec![at(
        1.0,
        vec![HighLevelCommand::Formation {
            pattern: PatternName::TwoColumns,
            waypoints: vec![Vec2::new(0.0, 1100.0), Vec2::new(14_000.0, 1100.0)],
            speed: FORMATION_SPEED,
            altitude: 100.0,
        }],
    )];
    c
}

/// Three trackers holding a standoff orbit around one ground target.
pub fn standoff(moving: bool, shelter: bool) -> ScenarioConfig {
    let name = match (moving, shelter) {
        (_, true) => "standoff_shelter",
        (true, false) => "standoff_moving",
        (false, false) => "standoff_static",
    };
    let mut c = base(name, if moving { 500.0 } else { 400.0 });
    c.fleet = fleet(3, Vec2::ZERO);
    c.start_airborne = true;
    c.stations.origin = Vec2::new(400.0, 700.0);
    c.stations.spacing = 200.0;
    c.sensor.footprint = 250.0;
    let mut target = TargetConfig {
        id: 1,
        position: STANDOFF_TARGET,
        velocity: Vec2::ZERO,
        changes: Vec::new(),
        shelters: Vec::new(),
    };
    if moving {
        target.changes.push(VelocityChange {
            at: 200.0,
            velocity: Vec2::new(3.0, 0.0),
        });
    }
    if shelter {
        let p = STANDOFF_TARGET;
        target.shelters.push(Polygon::rectangle(p + Vec2::new(20.0, -40.0), p + Vec2::new(50.0, 40.0)));
    }
    c.targets = vec![target];
    let (a, b) = (Vec2::new(200.0, 500.0), Vec2::new(1000.0, 1300.0));
    c.script = vec![at(
        1.0,
        vec![HighLevelCommand::Tracking {
            area: Polygon::rectangle(a, b),
            radius: STANDOFF_RADIUS,
            altitude: 100.0,
        }],
    )];
    c
}

/// Airborne group agreeing on a formation assignment over a lossy channel.
pub fn coordination(n: usize, loss: f64) -> ScenarioConfig {
    let mut c = formation(n, 0.0);
    c.name = format!("coordination{n}");
    c.duration = 40.0;
    c.metrics.formation_window = None;
    c.channels.sensitive.loss_rate = loss;
    c
}

/// Full sortie: launch, formation transit, pattern change, return and landing.
pub fn sortie(n: usize) -> ScenarioConfig {
    let spacing = reference_spacing(21);
    let mut c = base(&format!("sortie{n}"), 900.0);
    c.fleet = fleet(n, Vec2::ZERO);
    c.script = vec![
        at(
            0.0,
            vec![
                HighLevelCommand::Launch { lead: 0.0, spacing },
                HighLevelCommand::Formation {
                    pattern: PatternName::TwoColumns,
                    waypoints: vec![Vec2::new(0.0, 1100.0), Vec2::new(4000.0, 1100.0), Vec2::new(4000.0, 3000.0)],
                    speed: FORMATION_SPEED,
                    altitude: 100.0,
                },
            ],
        ),
        at(300.0, vec![HighLevelCommand::SetPattern { pattern: PatternName::Line }]),
        at(
            450.0,
            vec![HighLevelCommand::Rtl, HighLevelCommand::Land { lead: 60.0, spacing: 20.0 }],
        ),
    ];
    c
}
