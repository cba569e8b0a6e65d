//! Low-level control: heading and attitude loops, the fuzzy speed/height
//! controller and control allocation onto platform actuators.

use crate::airframe::{PlatformConfig, VehicleState};
use crate::geometry::wrap_error;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

const DEFAULT_TABLES: &str = include_str!("../config/controls.toml");

/// Proportional gain from attitude error to normalized surface deflection.
const ATTITUDE_GAIN: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum LowLevelError {
    #[error("allocation matrix `{layout}` row {row} has {got} columns, expected 4")]
    DimensionMismatch { layout: String, row: usize, got: usize },
    #[error("allocation matrix `{0}` has no channels")]
    EmptyMatrix(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("fuzzy universe `{0}` peaks must be strictly increasing")]
    BadUniverse(&'static str),
    #[error("no fuzzy rule fired")]
    EmptyFiring,
    #[error("unknown layout `{0}`")]
    UnknownLayout(String),
    #[error("control table file: {0}")]
    Parse(String),
}

/// Attitude and throttle set-points handed to the autopilot loops.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VirtualControls {
    pub roll: f64,
    pub pitch: f64,
    pub throttle: f64,
    pub yaw_trim: f64,
}

impl VirtualControls {
    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.throttle.is_finite() && self.yaw_trim.is_finite()
    }

    /// Throttle closed, wings level.
    pub fn idle() -> Self {
        Self::default()
    }
}

/// Normalized surface-equivalent efforts, the input columns of an allocation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlEffort {
    pub aileron: f64,
    pub elevator: f64,
    pub rudder: f64,
    pub throttle: f64,
}

impl ControlEffort {
    pub fn as_array(&self) -> [f64; 4] {
        [self.aileron, self.elevator, self.rudder, self.throttle]
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            aileron: self.aileron * a,
            elevator: self.elevator * a,
            rudder: self.rudder * a,
            throttle: self.throttle * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Conventional,
    FlyingWing,
    VTail,
    TiltRotor,
}

impl Layout {
    pub const ALL: [Layout; 4] = [Layout::Conventional, Layout::FlyingWing, Layout::VTail, Layout::TiltRotor];

    pub fn name(&self) -> &'static str {
        match self {
            Layout::Conventional => "conventional",
            Layout::FlyingWing => "flying_wing",
            Layout::VTail => "v_tail",
            Layout::TiltRotor => "tilt_rotor",
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = LowLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layout::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| LowLevelError::UnknownLayout(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub name: String,
    pub gains: Vec<f64>,
    /// Channel range is [0, 1] instead of [−1, 1].
    #[serde(default)]
    pub unipolar: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAllocationMatrix {
    pub layout: Layout,
    pub channels: Vec<AllocationRow>,
}

impl ControlAllocationMatrix {
    pub fn for_layout(layout: Layout) -> Self {
        ControlTables::defaults().layouts[&layout].clone()
    }

    pub fn validate(&self) -> Result<(), LowLevelError> {
        if self.channels.is_empty() {
            return Err(LowLevelError::EmptyMatrix(self.layout.name().to_string()));
        }
        for (row, ch) in self.channels.iter().enumerate() {
            if ch.gains.len() != 4 {
                return Err(LowLevelError::DimensionMismatch {
                    layout: self.layout.name().to_string(),
                    row,
                    got: ch.gains.len(),
                });
            }
            if !ch.gains.iter().all(|g| g.is_finite()) {
                return Err(LowLevelError::NonFinite("allocation gains"));
            }
        }
        Ok(())
    }

    /// Matrix product without clamping.
    pub fn apply_unclamped(&self, effort: &ControlEffort) -> Result<Vec<f64>, LowLevelError> {
        self.validate()?;
        let u = effort.as_array();
        Ok(self
            .channels
            .iter()
            .map(|ch| ch.gains.iter().zip(u).map(|(g, x)| g * x).sum())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorVector {
    pub layout: Layout,
    pub channels: Vec<f64>,
}

impl ActuatorVector {
    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(|c| *c == 0.0)
    }
}

/// Applies the allocation matrix, then clamps every channel to its range.
pub fn allocate(effort: &ControlEffort, matrix: &ControlAllocationMatrix) -> Result<ActuatorVector, LowLevelError> {
    if !effort.as_array().iter().all(|x| x.is_finite()) {
        return Err(LowLevelError::NonFinite("control effort"));
    }
    let raw = matrix.apply_unclamped(effort)?;
    let channels = raw
        .into_iter()
        .zip(&matrix.channels)
        .map(|(v, ch)| if ch.unipolar { v.clamp(0.0, 1.0) } else { v.clamp(-1.0, 1.0) })
        .collect();
    Ok(ActuatorVector {
        layout: matrix.layout,
        channels,
    })
}

/// Roll command for a course error, saturated at `max_roll`.
pub fn roll_command(course: f64, desired_course: f64, gain: f64, max_roll: f64) -> f64 {
    (gain * wrap_error(desired_course - course)).clamp(-max_roll, max_roll)
}

pub fn heading_control(state: &VehicleState, desired_course: f64, platform: &PlatformConfig) -> f64 {
    roll_command(state.course, desired_course, platform.heading_gain, platform.max_roll)
}

/// Inner attitude loops: surface efforts that drive roll and pitch toward
/// their set-points.
pub fn attitude_control(state: &VehicleState, vc: &VirtualControls) -> ControlEffort {
    ControlEffort {
        aileron: (ATTITUDE_GAIN * (vc.roll - state.roll)).clamp(-1.0, 1.0),
        elevator: (ATTITUDE_GAIN * (vc.pitch - state.pitch)).clamp(-1.0, 1.0),
        rudder: vc.yaw_trim.clamp(-1.0, 1.0),
        throttle: vc.throttle.clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRuleTable {
    pub speed_peaks: [f64; 5],
    pub altitude_peaks: [f64; 5],
    /// Pitch increments, indexed `[altitude level][speed level]`.
    pub pitch: [[f64; 5]; 5],
    pub throttle: [[f64; 5]; 5],
}

impl Default for FuzzyRuleTable {
    fn default() -> Self {
        ControlTables::defaults().fuzzy.clone()
    }
}

fn triangle_memberships(peaks: &[f64; 5], x: f64) -> [f64; 5] {
    let x = x.clamp(peaks[0], peaks[4]);
    let mut mu = [0.0; 5];
    for i in 0..5 {
        let p = peaks[i];
        mu[i] = if x == p {
            1.0
        } else if x < p {
            if i == 0 {
                0.0
            } else {
                ((x - peaks[i - 1]) / (p - peaks[i - 1])).max(0.0)
            }
        } else if i == 4 {
            0.0
        } else {
            ((peaks[i + 1] - x) / (peaks[i + 1] - p)).max(0.0)
        };
    }
    mu
}

impl FuzzyRuleTable {
    pub fn validate(&self) -> Result<(), LowLevelError> {
        for (peaks, name) in [(&self.speed_peaks, "speed"), (&self.altitude_peaks, "altitude")] {
            if !peaks.iter().all(|p| p.is_finite()) {
                return Err(LowLevelError::NonFinite("fuzzy peaks"));
            }
            if !peaks.windows(2).all(|w| w[0] < w[1]) {
                return Err(LowLevelError::BadUniverse(name));
            }
        }
        if !self.pitch.iter().chain(&self.throttle).flatten().all(|v| v.is_finite()) {
            return Err(LowLevelError::NonFinite("fuzzy consequents"));
        }
        Ok(())
    }

    /// Defuzzified (pitch, throttle) increments for the given errors.
    pub fn evaluate(&self, speed_error: f64, altitude_error: f64) -> Result<(f64, f64), LowLevelError> {
        if !(speed_error.is_finite() && altitude_error.is_finite()) {
            return Err(LowLevelError::NonFinite("fuzzy input"));
        }
        let mv = triangle_memberships(&self.speed_peaks, speed_error);
        let mh = triangle_memberships(&self.altitude_peaks, altitude_error);
        let (mut w, mut p, mut t) = (0.0, 0.0, 0.0);
        for (i, hi) in mh.iter().enumerate() {
            for (j, vj) in mv.iter().enumerate() {
                let firing = hi * vj;
                if firing > 0.0 {
                    w += firing;
                    p += firing * self.pitch[i][j];
                    t += firing * self.throttle[i][j];
                }
            }
        }
        if w <= 0.0 {
            return Err(LowLevelError::EmptyFiring);
        }
        Ok((p / w, t / w))
    }

    pub fn consequent_bounds(&self) -> ((f64, f64), (f64, f64)) {
        let bounds = |m: &[[f64; 5]; 5]| {
            m.iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
        };
        (bounds(&self.pitch), bounds(&self.throttle))
    }
}

/// Fuzzy speed/height controller: pitch and throttle commands around trim.
pub fn speed_height_control(
    state: &VehicleState,
    desired_speed: f64,
    desired_altitude: f64,
    table: &FuzzyRuleTable,
    platform: &PlatformConfig,
) -> Result<(f64, f64), LowLevelError> {
    let target_speed = platform.clamp_speed(desired_speed);
    let (dp, dt) = table.evaluate(target_speed - state.airspeed, desired_altitude - state.altitude)?;
    let pitch = dp.clamp(-platform.max_pitch, platform.max_pitch);
    let throttle = (platform.trim_throttle(target_speed) + dt).clamp(0.0, 1.0);
    Ok((pitch, throttle))
}

/// Rule base plus the allocation matrices for every layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTables {
    pub fuzzy: FuzzyRuleTable,
    pub layouts: BTreeMap<Layout, ControlAllocationMatrix>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TablesFile {
    fuzzy: FuzzyRuleTable,
    layouts: BTreeMap<Layout, LayoutFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    channels: Vec<AllocationRow>,
}

impl ControlTables {
    pub fn parse(text: &str) -> Result<Self, LowLevelError> {
        let file: TablesFile = toml::from_str(text).map_err(|e| LowLevelError::Parse(e.to_string()))?;
        file.fuzzy.validate()?;
        let mut layouts = BTreeMap::new();
        for (layout, lf) in file.layouts {
            let m = ControlAllocationMatrix {
                layout,
                channels: lf.channels,
            };
            m.validate()?;
            layouts.insert(layout, m);
        }
        if let Some(missing) = Layout::ALL.iter().find(|l| !layouts.contains_key(l)) {
            return Err(LowLevelError::UnknownLayout(missing.name().to_string()));
        }
        Ok(Self {
            fuzzy: file.fuzzy,
            layouts,
        })
    }

    pub fn defaults() -> &'static ControlTables {
        static TABLES: OnceLock<ControlTables> = OnceLock::new();
        TABLES.get_or_init(|| ControlTables::parse(DEFAULT_TABLES).expect("shipped control tables are valid"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airframe::{step_dynamics, WindField};
    use crate::geometry::Vec2;
    use proptest::prelude::*;

    fn level(v: f64, h: f64) -> VehicleState {
        VehicleState::level(Vec2::ZERO, h, v, 0.0)
    }

    #[test]
    fn fuzzy_center_is_trim() {
        let p = PlatformConfig::fixed_wing();
        let t = FuzzyRuleTable::default();
        let (pitch, throttle) = speed_height_control(&level(19.0, 100.0), 19.0, 100.0, &t, &p).unwrap();
        assert_eq!(pitch, 0.0);
        assert_eq!(throttle, p.trim_throttle(19.0));
    }

    #[test]
    fn fuzzy_signs() {
        let p = PlatformConfig::fixed_wing();
        let t = FuzzyRuleTable::default();
        let trim = p.trim_throttle(19.0);
        // 20 m low fires only the (PS altitude, Z speed) cell: +0.08 rad, +0.06.
        let (pitch, throttle) = speed_height_control(&level(19.0, 80.0), 19.0, 100.0, &t, &p).unwrap();
        assert!((pitch - 0.08).abs() < 1e-12 && pitch > 0.0);
        assert!((throttle - (trim + 0.06)).abs() < 1e-12 && throttle > trim);
        // 3 m/s fast fires (Z altitude, NS speed): throttle −0.12.
        let (_, throttle) = speed_height_control(&level(22.0, 100.0), 19.0, 100.0, &t, &p).unwrap();
        assert!((throttle - (trim - 0.12)).abs() < 1e-12);
    }

    #[test]
    fn heading_examples() {
        let p = PlatformConfig::fixed_wing();
        let mut s = level(19.0, 100.0);
        assert_eq!(heading_control(&s, 0.0, &p), 0.0);
        assert!((roll_command(0.0, 0.1, 1.0, p.max_roll) - 0.1).abs() < 1e-15);
        s.course = 3.1;
        let r = roll_command(3.1, -3.1, 1.0, p.max_roll);
        let expected = 2.0 * std::f64::consts::PI - 6.2;
        assert!((r - expected).abs() < 1e-12 && r > 0.0, "{r}");
        assert!(heading_control(&s, -3.1, &p) > 0.0);
    }

    #[test]
    fn allocation_examples() {
        let conv = ControlAllocationMatrix::for_layout(Layout::Conventional);
        let e = ControlEffort {
            aileron: 0.2,
            elevator: -0.3,
            rudder: 0.1,
            throttle: 0.6,
        };
        let out = allocate(&e, &conv).unwrap();
        assert_eq!(out.channels, vec![0.2, -0.3, 0.1, 0.6]);

        let wing = ControlAllocationMatrix::for_layout(Layout::FlyingWing);
        let e = ControlEffort {
            aileron: 0.2,
            elevator: 0.1,
            ..Default::default()
        };
        let out = allocate(&e, &wing).unwrap();
        assert!((out.channels[0] - 0.3).abs() < 1e-15);
        assert!((out.channels[1] + 0.1).abs() < 1e-15);

        for layout in Layout::ALL {
            let m = ControlAllocationMatrix::for_layout(layout);
            let out = allocate(&ControlEffort::default(), &m).unwrap();
            assert!(out.is_zero(), "{layout:?}");
            assert_eq!(out.channels.len(), m.channels.len());
        }
    }

    #[test]
    fn allocation_dimension_mismatch() {
        let mut m = ControlAllocationMatrix::for_layout(Layout::Conventional);
        m.channels[2].gains.pop();
        assert!(matches!(
            allocate(&ControlEffort::default(), &m),
            Err(LowLevelError::DimensionMismatch { row: 2, got: 3, .. })
        ));
    }

    #[test]
    fn layout_names_round_trip() {
        for l in Layout::ALL {
            assert_eq!(l.name().parse::<Layout>().unwrap(), l);
        }
        assert!("quad_x".parse::<Layout>().is_err());
    }

    #[test]
    fn heading_loop_attracts() {
        let p = PlatformConfig::fixed_wing();
        let mut s = level(19.0, 100.0);
        let chi_d = 2.5;
        let mut prev = f64::INFINITY;
        for k in 0..1200 {
            let vc = VirtualControls {
                roll: heading_control(&s, chi_d, &p),
                pitch: 0.0,
                throttle: p.trim_throttle(19.0),
                yaw_trim: 0.0,
            };
            s = step_dynamics(&p, &s, &vc, &WindField::calm(), 0.05).unwrap().state;
            let err = wrap_error(chi_d - s.course).abs();
            if k > 100 {
                assert!(err <= prev + 1e-9, "error grew at tick {k}");
            }
            prev = err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn layouts_do_not_change_trajectory() {
        let a = PlatformConfig::fixed_wing();
        let b = PlatformConfig {
            allocation: ControlAllocationMatrix::for_layout(Layout::VTail),
            ..a.clone()
        };
        let vc = VirtualControls {
            roll: 0.3,
            pitch: 0.05,
            throttle: 0.6,
            yaw_trim: 0.0,
        };
        let (mut sa, mut sb) = (level(19.0, 100.0), level(19.0, 100.0));
        for _ in 0..400 {
            sa = step_dynamics(&a, &sa, &vc, &WindField::calm(), 0.05).unwrap().state;
            sb = step_dynamics(&b, &sb, &vc, &WindField::calm(), 0.05).unwrap().state;
            assert_eq!(sa, sb);
        }
    }

    proptest! {
        #[test]
        fn allocation_is_linear_inside_range(ail in -0.4f64..0.4, ele in -0.4f64..0.4, rud in -0.4f64..0.4, thr in 0.0f64..0.4, a in 0.0f64..1.0) {
            let e = ControlEffort { aileron: ail, elevator: ele, rudder: rud, throttle: thr };
            for layout in Layout::ALL {
                let m = ControlAllocationMatrix::for_layout(layout);
                let scaled = allocate(&e.scaled(a), &m).unwrap();
                let raw = m.apply_unclamped(&e).unwrap();
                for ((got, r), ch) in scaled.channels.iter().zip(raw).zip(&m.channels) {
                    let want = if ch.unipolar { (a * r).clamp(0.0, 1.0) } else { (a * r).clamp(-1.0, 1.0) };
                    prop_assert!((got - want).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn fuzzy_output_within_consequents(ev in -50f64..50.0, eh in -500f64..500.0) {
            let t = FuzzyRuleTable::default();
            let ((plo, phi), (tlo, thi)) = t.consequent_bounds();
            let (p, th) = t.evaluate(ev, eh).unwrap();
            prop_assert!(p >= plo - 1e-12 && p <= phi + 1e-12);
            prop_assert!(th >= tlo - 1e-12 && th <= thi + 1e-12);
        }

        #[test]
        fn roll_command_sign_and_bound(course in -3.14f64..3.14, target in -3.14f64..3.14) {
            let r = roll_command(course, target, 0.8, 0.7);
            let e = wrap_error(target - course);
            prop_assert!(r.abs() <= 0.7);
            prop_assert!(r == 0.0 || r.signum() == e.signum());
        }
    }
}
