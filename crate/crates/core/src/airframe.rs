//! Kinematic fixed-wing vehicle model.
//!
//! Point-mass speed dynamics, coordinated-turn course kinematics and
//! first-order attitude lags, integrated with a fixed-step RK4 scheme.
//! The flight-path angle `γ` is taken equal to pitch (zero angle of attack),
//! so `γ = asin(ḣ / V)` holds by construction.

use crate::geometry::{wrap_angle, Vec2};
use crate::lowlevel::{ControlAllocationMatrix, Layout, VirtualControls};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRAVITY: f64 = 9.80665;

/// Ground speed floor used in the course-rate equation.
const MIN_GROUND_SPEED: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AirframeError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("step size {0} s outside (0, 0.1]")]
    InvalidStep(f64),
    #[error("invalid platform `{name}`: {reason}")]
    InvalidPlatform { name: String, reason: String },
}

/// Physical and control limits of one airframe type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlatformFile", into = "PlatformFile")]
pub struct PlatformConfig {
    pub name: String,
    pub cruise_speed: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub mass: f64,
    pub max_roll: f64,
    pub max_pitch: f64,
    pub max_thrust: f64,
    /// Drag model `D = c·V²`.
    pub drag_coefficient: f64,
    pub allocation: ControlAllocationMatrix,
    pub endurance: f64,
    /// Roll and pitch lag time constant, s.
    pub attitude_time_constant: f64,
    /// Course-error to roll gain `k_χ`, rad/rad.
    pub heading_gain: f64,
}

impl PlatformConfig {
    /// The 1.1 kg, 19 m/s fixed-wing airframe.
    pub fn fixed_wing() -> Self {
        Self::fitted(
            "fixed_wing",
            19.0,
            13.0,
            25.0,
            1.1,
            ControlAllocationMatrix::for_layout(Layout::Conventional),
        )
    }

    /// The 1.2 kg, 23 m/s tilt-rotor airframe in forward flight.
    pub fn tilt_rotor() -> Self {
        Self::fitted(
            "tilt_rotor",
            23.0,
            15.0,
            30.0,
            1.2,
            ControlAllocationMatrix::for_layout(Layout::TiltRotor),
        )
    }

    /// Builds a platform whose drag is fitted so that half of `max_thrust`
    /// sustains level cruise.
    pub fn fitted(
        name: &str,
        cruise_speed: f64,
        min_speed: f64,
        max_speed: f64,
        mass: f64,
        allocation: ControlAllocationMatrix,
    ) -> Self {
        let max_thrust = 3.0 * mass / 1.1;
        Self {
            name: name.to_string(),
            cruise_speed,
            min_speed,
            max_speed,
            mass,
            max_roll: 45f64.to_radians(),
            max_pitch: 20f64.to_radians(),
            max_thrust,
            drag_coefficient: fitted_drag(max_thrust, cruise_speed),
            allocation,
            endurance: 3600.0,
            attitude_time_constant: 0.5,
            heading_gain: 0.8,
        }
    }

    pub fn validate(&self) -> Result<(), AirframeError> {
        let bad = |reason: &str| AirframeError::InvalidPlatform {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        let all_finite = [
            self.cruise_speed,
            self.min_speed,
            self.max_speed,
            self.mass,
            self.max_roll,
            self.max_pitch,
            self.max_thrust,
            self.drag_coefficient,
            self.endurance,
            self.attitude_time_constant,
            self.heading_gain,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(bad("non-finite parameter"));
        }
        if !(0.0 < self.min_speed && self.min_speed < self.cruise_speed && self.cruise_speed < self.max_speed) {
            return Err(bad("speeds must satisfy 0 < min < cruise < max"));
        }
        if self.mass <= 0.0 {
            return Err(bad("mass must be positive"));
        }
        if !(self.max_roll > 0.0 && self.max_roll < std::f64::consts::FRAC_PI_2) {
            return Err(bad("max_roll must lie in (0, π/2)"));
        }
        if !(self.max_pitch > 0.0 && self.max_pitch < std::f64::consts::FRAC_PI_2) {
            return Err(bad("max_pitch must lie in (0, π/2)"));
        }
        if self.endurance <= 0.0 {
            return Err(bad("endurance must be positive"));
        }
        if self.max_thrust <= 0.0 || self.drag_coefficient < 0.0 {
            return Err(bad("thrust must be positive and drag non-negative"));
        }
        if self.attitude_time_constant <= 0.0 || self.heading_gain <= 0.0 {
            return Err(bad("attitude lag and heading gain must be positive"));
        }
        self.allocation
            .validate()
            .map_err(|e| bad(&e.to_string()))
    }

    /// Below this airspeed the wing no longer carries the aircraft.
    pub fn stall_speed(&self) -> f64 {
        0.9 * self.min_speed
    }

    pub fn clamp_speed(&self, v: f64) -> f64 {
        v.clamp(self.min_speed, self.max_speed)
    }

    /// Throttle that balances drag in level flight at `speed`.
    pub fn trim_throttle(&self, speed: f64) -> f64 {
        (self.drag_coefficient * speed * speed / self.max_thrust).clamp(0.0, 1.0)
    }

    /// Radius of the tightest level turn at cruise speed.
    pub fn min_turn_radius(&self) -> f64 {
        self.cruise_speed * self.cruise_speed / (GRAVITY * self.max_roll.tan())
    }
}

pub fn fitted_drag(max_thrust: f64, cruise_speed: f64) -> f64 {
    0.5 * max_thrust / (cruise_speed * cruise_speed)
}

/// On-disk form of [`PlatformConfig`]; the drag coefficient and controller
/// constants are optional and default to fitted values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlatformFile {
    name: String,
    cruise_speed: f64,
    min_speed: f64,
    max_speed: f64,
    mass: f64,
    max_roll: f64,
    max_pitch: f64,
    max_thrust: f64,
    #[serde(default)]
    drag_coefficient: Option<f64>,
    allocation: AllocationRef,
    endurance: f64,
    #[serde(default)]
    attitude_time_constant: Option<f64>,
    #[serde(default)]
    heading_gain: Option<f64>,
}

/// Either a layout name resolved against the shipped matrices, or an inline matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AllocationRef {
    Named(Layout),
    Inline(ControlAllocationMatrix),
}

impl TryFrom<PlatformFile> for PlatformConfig {
    type Error = AirframeError;

    fn try_from(f: PlatformFile) -> Result<Self, Self::Error> {
        let allocation = match f.allocation {
            AllocationRef::Named(layout) => ControlAllocationMatrix::for_layout(layout),
            AllocationRef::Inline(m) => m,
        };
        let cfg = PlatformConfig {
            drag_coefficient: f
                .drag_coefficient
                .unwrap_or_else(|| fitted_drag(f.max_thrust, f.cruise_speed)),
            name: f.name,
            cruise_speed: f.cruise_speed,
            min_speed: f.min_speed,
            max_speed: f.max_speed,
            mass: f.mass,
            max_roll: f.max_roll,
            max_pitch: f.max_pitch,
            max_thrust: f.max_thrust,
            allocation,
            endurance: f.endurance,
            attitude_time_constant: f.attitude_time_constant.unwrap_or(0.5),
            heading_gain: f.heading_gain.unwrap_or(0.8),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<PlatformConfig> for PlatformFile {
    fn from(c: PlatformConfig) -> Self {
        PlatformFile {
            name: c.name,
            cruise_speed: c.cruise_speed,
            min_speed: c.min_speed,
            max_speed: c.max_speed,
            mass: c.mass,
            max_roll: c.max_roll,
            max_pitch: c.max_pitch,
            max_thrust: c.max_thrust,
            drag_coefficient: Some(c.drag_coefficient),
            allocation: AllocationRef::Inline(c.allocation),
            endurance: c.endurance,
            attitude_time_constant: Some(c.attitude_time_constant),
            heading_gain: Some(c.heading_gain),
        }
    }
}

/// State of one UAV at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    pub altitude: f64,
    pub airspeed: f64,
    /// Ground course χ, in [−π, π).
    pub course: f64,
    /// Positive roll turns counter-clockwise (increasing χ).
    pub roll: f64,
    pub pitch: f64,
    pub timestamp: f64,
}

impl VehicleState {
    pub fn level(position: Vec2, altitude: f64, airspeed: f64, course: f64) -> Self {
        Self {
            position,
            altitude,
            airspeed,
            course: wrap_angle(course),
            roll: 0.0,
            pitch: 0.0,
            timestamp: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && [
                self.altitude,
                self.airspeed,
                self.course,
                self.roll,
                self.pitch,
                self.timestamp,
            ]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Ground velocity under the given wind, along the ground course.
    pub fn ground_velocity(&self, wind: Vec2) -> Vec2 {
        Vec2::from_angle(self.course) * ground_speed(self.airspeed * self.pitch.cos(), self.course, wind)
    }
}

/// Mean wind plus seeded, low-pass filtered gusts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    pub mean_velocity: Vec2,
    pub gust_stddev: f64,
    pub seed: u64,
}

impl Default for WindField {
    fn default() -> Self {
        Self::calm()
    }
}

impl WindField {
    pub fn calm() -> Self {
        Self {
            mean_velocity: Vec2::ZERO,
            gust_stddev: 0.0,
            seed: 0,
        }
    }

    /// The same mean wind with an independent gust stream for one vehicle.
    pub fn for_vehicle(&self, vehicle: u64) -> WindField {
        WindField {
            seed: splitmix64(self.seed ^ vehicle.wrapping_mul(0xA24B_AED4_963E_E407)),
            ..*self
        }
    }

    pub fn at(&self, t: f64) -> Vec2 {
        sample_gust(self, t)
    }
}

/// Gust samples are held for this long.
pub const GUST_SAMPLE_PERIOD: f64 = 0.1;
/// First-order low-pass time constant of the gust filter.
pub const GUST_TIME_CONSTANT: f64 = 1.0;
const GUST_WEIGHT_CUTOFF: f64 = 1e-7;

/// Total wind at time `t`: mean plus a per-axis Gaussian sequence passed
/// through a first-order low-pass filter.
///
/// The filter output is evaluated as a truncated convolution over hashed
/// white-noise samples, which makes the value a pure function of `(seed, t)`
/// and the stationary standard deviation equal to `gust_stddev`.
pub fn sample_gust(wind: &WindField, t: f64) -> Vec2 {
    if wind.gust_stddev == 0.0 {
        return wind.mean_velocity;
    }
    let k = (t.max(0.0) / GUST_SAMPLE_PERIOD).floor() as i64;
    let alpha = 1.0 - (-GUST_SAMPLE_PERIOD / GUST_TIME_CONSTANT).exp();
    let noise_scale = wind.gust_stddev * ((2.0 - alpha) / alpha).sqrt();
    let mut weight = alpha;
    let mut acc = Vec2::ZERO;
    let mut j = 0i64;
    while weight > GUST_WEIGHT_CUTOFF * alpha {
        let (nx, ny) = hashed_normal_pair(wind.seed, k - j);
        acc += Vec2::new(nx, ny) * weight;
        weight *= 1.0 - alpha;
        j += 1;
    }
    wind.mean_velocity + acc * noise_scale
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1]: never zero so the logarithm stays finite.
    ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

fn hashed_normal_pair(seed: u64, index: i64) -> (f64, f64) {
    let h1 = splitmix64(seed ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let h2 = splitmix64(h1);
    let r = (-2.0 * unit_open(h1).ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * unit_open(h2)).sin_cos();
    (r * c, r * s)
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepped {
    pub state: VehicleState,
    /// Airspeed fell below the stall threshold during the step.
    pub stalled: bool,
}

fn ground_speed(horizontal_airspeed: f64, course: f64, wind: Vec2) -> f64 {
    let u = Vec2::from_angle(course);
    let along = wind.dot(u);
    let across = u.cross(wind);
    let disc = (horizontal_airspeed * horizontal_airspeed - across * across).max(0.0);
    along + disc.sqrt()
}

#[derive(Clone, Copy)]
struct Deriv {
    x: f64,
    y: f64,
    h: f64,
    v: f64,
    chi: f64,
    phi: f64,
    theta: f64,
}

#[derive(Clone, Copy)]
struct Integrand {
    x: f64,
    y: f64,
    h: f64,
    v: f64,
    chi: f64,
    phi: f64,
    theta: f64,
}

impl Integrand {
    fn advance(&self, d: &Deriv, dt: f64) -> Integrand {
        Integrand {
            x: self.x + d.x * dt,
            y: self.y + d.y * dt,
            h: self.h + d.h * dt,
            v: self.v + d.v * dt,
            chi: self.chi + d.chi * dt,
            phi: self.phi + d.phi * dt,
            theta: self.theta + d.theta * dt,
        }
    }
}

fn derivative(p: &PlatformConfig, s: &Integrand, u: &VirtualControls, wind: Vec2) -> Deriv {
    let tau = p.attitude_time_constant;
    let gamma = s.theta;
    let thrust = u.throttle.clamp(0.0, 1.0) * p.max_thrust;
    let drag = p.drag_coefficient * s.v * s.v;
    let vg = ground_speed(s.v.max(0.0) * gamma.cos(), s.chi, wind);
    let (sin_chi, cos_chi) = s.chi.sin_cos();
    Deriv {
        x: vg * cos_chi,
        y: vg * sin_chi,
        h: s.v * gamma.sin(),
        v: (thrust - drag) / p.mass - GRAVITY * gamma.sin(),
        chi: GRAVITY / vg.max(MIN_GROUND_SPEED) * s.phi.tan(),
        phi: (u.roll.clamp(-p.max_roll, p.max_roll) - s.phi) / tau,
        theta: (u.pitch.clamp(-p.max_pitch, p.max_pitch) - s.theta) / tau,
    }
}

/// Advances `state` by `dt` under `controls` and the wind sampled at the
/// start of the step.
pub fn step_dynamics(
    platform: &PlatformConfig,
    state: &VehicleState,
    controls: &VirtualControls,
    wind: &WindField,
    dt: f64,
) -> Result<Stepped, AirframeError> {
    if !state.is_finite() {
        return Err(AirframeError::NonFinite("vehicle state"));
    }
    if !controls.is_finite() {
        return Err(AirframeError::NonFinite("virtual controls"));
    }
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(AirframeError::InvalidStep(dt));
    }
    let w = sample_gust(wind, state.timestamp);
    if !w.is_finite() {
        return Err(AirframeError::NonFinite("wind"));
    }
    let s0 = Integrand {
        x: state.position.x,
        y: state.position.y,
        h: state.altitude,
        v: state.airspeed,
        chi: state.course,
        phi: state.roll,
        theta: state.pitch,
    };
    let k1 = derivative(platform, &s0, controls, w);
    let k2 = derivative(platform, &s0.advance(&k1, dt / 2.0), controls, w);
    let k3 = derivative(platform, &s0.advance(&k2, dt / 2.0), controls, w);
    let k4 = derivative(platform, &s0.advance(&k3, dt), controls, w);
    let combine = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
    let d = Deriv {
        x: combine(k1.x, k2.x, k3.x, k4.x),
        y: combine(k1.y, k2.y, k3.y, k4.y),
        h: combine(k1.h, k2.h, k3.h, k4.h),
        v: combine(k1.v, k2.v, k3.v, k4.v),
        chi: combine(k1.chi, k2.chi, k3.chi, k4.chi),
        phi: combine(k1.phi, k2.phi, k3.phi, k4.phi),
        theta: combine(k1.theta, k2.theta, k3.theta, k4.theta),
    };
    let s1 = s0.advance(&d, dt);
    let next = VehicleState {
        position: Vec2::new(s1.x, s1.y),
        altitude: s1.h.max(0.0),
        airspeed: s1.v.max(0.0),
        course: wrap_angle(s1.chi),
        roll: s1.phi.clamp(-platform.max_roll, platform.max_roll),
        pitch: s1.theta.clamp(-platform.max_pitch, platform.max_pitch),
        timestamp: state.timestamp + dt,
    };
    if !next.is_finite() {
        return Err(AirframeError::NonFinite("integrated state"));
    }
    Ok(Stepped {
        stalled: next.airspeed < platform.stall_speed(),
        state: next,
    })
}

/// Course rate `χ̇ = (g / V_g)·tan φ` for the current roll.
pub fn course_rate(state: &VehicleState, wind: Vec2) -> f64 {
    let vg = ground_speed(state.airspeed * state.pitch.cos(), state.course, wind);
    GRAVITY / vg.max(MIN_GROUND_SPEED) * state.roll.tan()
}

/// Kinetic plus potential energy, `½mV² + mgh`.
pub fn total_energy(state: &VehicleState, mass: f64) -> Result<f64, AirframeError> {
    if !(state.airspeed.is_finite() && state.altitude.is_finite() && mass.is_finite()) {
        return Err(AirframeError::NonFinite("energy input"));
    }
    Ok(0.5 * mass * state.airspeed * state.airspeed + mass * GRAVITY * state.altitude)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controls(roll: f64, pitch: f64, throttle: f64) -> VirtualControls {
        VirtualControls {
            roll,
            pitch,
            throttle,
            yaw_trim: 0.0,
        }
    }

    #[test]
    fn force_balance_holds_speed() {
        let p = PlatformConfig::fixed_wing();
        let s = VehicleState::level(Vec2::ZERO, 100.0, 19.0, 0.0);
        let trim = p.trim_throttle(19.0);
        assert!((trim - 0.5).abs() < 1e-12);
        let next = step_dynamics(&p, &s, &controls(0.0, 0.0, trim), &WindField::calm(), 0.05).unwrap();
        assert!((next.state.airspeed - 19.0).abs() < 1e-12);
    }

    #[test]
    fn coordinated_turn_rate() {
        // Hand arithmetic: (9.80665 / 19)·tan(30°) = 0.29799...
        let mut s = VehicleState::level(Vec2::ZERO, 100.0, 19.0, 0.0);
        s.roll = 30f64.to_radians();
        let rate = course_rate(&s, Vec2::ZERO);
        assert!((rate - 0.2980).abs() < 1e-4, "{rate}");
    }

    #[test]
    fn wings_level_is_straight() {
        let p = PlatformConfig::fixed_wing();
        let mut s = VehicleState::level(Vec2::new(3.0, -2.0), 100.0, 19.0, 0.7);
        let start = s;
        for _ in 0..2000 {
            s = step_dynamics(&p, &s, &controls(0.0, 0.0, 0.5), &WindField::calm(), 0.05).unwrap().state;
            assert_eq!(s.course, start.course);
        }
        let dir = Vec2::from_angle(start.course);
        let cross = dir.cross(s.position - start.position);
        let travelled = s.position.distance(start.position);
        assert!(cross.abs() <= 1e-12 * travelled, "{cross}");
    }

    #[test]
    fn energy_examples() {
        let zero = VehicleState::level(Vec2::ZERO, 0.0, 0.0, 0.0);
        assert_eq!(total_energy(&zero, 1.1).unwrap(), 0.0);
        let s = VehicleState::level(Vec2::ZERO, 100.0, 19.0, 0.0);
        // 0.55·361 + 1.1·9.80665·100
        assert!((total_energy(&s, 1.1).unwrap() - 1277.28).abs() < 0.01);
        let fast = VehicleState { airspeed: 38.0, altitude: 0.0, ..s };
        let slow = VehicleState { airspeed: 19.0, altitude: 0.0, ..s };
        assert!((total_energy(&fast, 1.1).unwrap() - 4.0 * total_energy(&slow, 1.1).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn energy_conserved_without_net_thrust() {
        // Zero thrust against zero drag is T = D while the climb trades speed for height.
        let mut p = PlatformConfig::fixed_wing();
        p.drag_coefficient = 0.0;
        let mut s = VehicleState::level(Vec2::ZERO, 100.0, 19.0, 0.0);
        s.pitch = 0.15;
        let e0 = total_energy(&s, p.mass).unwrap();
        let dt = 0.05;
        for _ in 0..200 {
            let before = total_energy(&s, p.mass).unwrap();
            s = step_dynamics(&p, &s, &controls(0.0, 0.15, 0.0), &WindField::calm(), dt).unwrap().state;
            let after = total_energy(&s, p.mass).unwrap();
            assert!((after - before).abs() < 1e-6 * dt * e0);
        }
        assert!(s.altitude > 100.0 && s.airspeed < 19.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PlatformConfig::fixed_wing();
        let mut s = VehicleState::level(Vec2::ZERO, 100.0, 19.0, 0.0);
        let u = controls(0.0, 0.0, 0.5);
        assert_eq!(
            step_dynamics(&p, &s, &u, &WindField::calm(), 0.2),
            Err(AirframeError::InvalidStep(0.2))
        );
        s.airspeed = f64::NAN;
        assert!(matches!(
            step_dynamics(&p, &s, &u, &WindField::calm(), 0.05),
            Err(AirframeError::NonFinite(_))
        ));
    }

    #[test]
    fn stall_flag() {
        let p = PlatformConfig::fixed_wing();
        let s = VehicleState::level(Vec2::ZERO, 100.0, 10.0, 0.0);
        let out = step_dynamics(&p, &s, &controls(0.0, 0.0, 0.0), &WindField::calm(), 0.05).unwrap();
        assert!(out.stalled);
    }

    #[test]
    fn gusts() {
        let calm = WindField {
            mean_velocity: Vec2::new(2.0, -1.0),
            gust_stddev: 0.0,
            seed: 3,
        };
        for i in 0..100 {
            assert_eq!(sample_gust(&calm, i as f64 * 0.37), calm.mean_velocity);
        }
        let gusty = WindField {
            mean_velocity: Vec2::new(2.0, -1.0),
            gust_stddev: 1.0,
            seed: 7,
        };
        assert_eq!(sample_gust(&gusty, 12.34), sample_gust(&gusty, 12.34));
        let n = 10_000;
        let mean = (0..n).fold(Vec2::ZERO, |acc, i| acc + sample_gust(&gusty, i as f64)) / n as f64;
        assert!(mean.distance(gusty.mean_velocity) < 0.05, "{mean:?}");
    }

    #[test]
    fn gust_stationary_spread() {
        let gusty = WindField {
            mean_velocity: Vec2::ZERO,
            gust_stddev: 1.5,
            seed: 11,
        };
        let n = 20_000;
        let var = (0..n)
            .map(|i| sample_gust(&gusty, i as f64 * 0.5).x.powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var.sqrt() - 1.5).abs() < 0.1, "{}", var.sqrt());
    }
}
