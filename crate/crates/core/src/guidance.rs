//! Guidance laws: vector-field path following, coordinated path following,
//! leader-follower formation keeping, Lyapunov standoff tracking and
//! collision avoidance.

use crate::airframe::{PlatformConfig, VehicleState, GRAVITY};
use crate::geometry::{wrap_angle, wrap_error, wrap_positive, Circle, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Time step used to differentiate a guidance field along the motion.
const FIELD_RATE_STEP: f64 = 0.1;
/// Repulsive directions closer than this to dead astern count as a tie.
const ASTERN_TIE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("straight segment has zero length")]
    DegenerateSegment,
    #[error("expected a {0} segment")]
    WrongKind(&'static str),
    #[error("vehicle at orbit center; holding course {hold}")]
    OrbitCenter { hold: f64 },
    #[error("leader state is {age:.2} s old")]
    StaleLeader { age: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitDirection {
    Cw,
    Ccw,
}

impl OrbitDirection {
    fn sign(self) -> f64 {
        match self {
            OrbitDirection::Ccw => 1.0,
            OrbitDirection::Cw => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            OrbitDirection::Ccw => OrbitDirection::Cw,
            OrbitDirection::Cw => OrbitDirection::Ccw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentGeometry {
    Straight { start: Vec2, end: Vec2 },
    Orbit { center: Vec2, radius: f64, direction: OrbitDirection },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    #[serde(flatten)]
    pub geometry: SegmentGeometry,
    pub desired_speed: f64,
    pub desired_altitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendezvous_time: Option<f64>,
}

impl PathSegment {
    pub fn straight(start: Vec2, end: Vec2, speed: f64, altitude: f64) -> Self {
        Self {
            geometry: SegmentGeometry::Straight { start, end },
            desired_speed: speed,
            desired_altitude: altitude,
            rendezvous_time: None,
        }
    }

    pub fn orbit(center: Vec2, radius: f64, direction: OrbitDirection, speed: f64, altitude: f64) -> Self {
        Self {
            geometry: SegmentGeometry::Orbit {
                center,
                radius,
                direction,
            },
            desired_speed: speed,
            desired_altitude: altitude,
            rendezvous_time: None,
        }
    }

    /// Straight segments: start point. Orbits: the point on the circle due east of the center.
    pub fn start(&self) -> Vec2 {
        match self.geometry {
            SegmentGeometry::Straight { start, .. } => start,
            SegmentGeometry::Orbit { center, radius, .. } => center + Vec2::new(radius, 0.0),
        }
    }

    /// Orbits are closed, so they end where they start.
    pub fn end(&self) -> Vec2 {
        match self.geometry {
            SegmentGeometry::Straight { end, .. } => end,
            _ => self.start(),
        }
    }

    /// Straight length, or one full lap of an orbit.
    pub fn length(&self) -> f64 {
        match self.geometry {
            SegmentGeometry::Straight { start, end } => start.distance(end),
            SegmentGeometry::Orbit { radius, .. } => 2.0 * PI * radius,
        }
    }

    pub fn path_course(&self) -> Option<f64> {
        match self.geometry {
            SegmentGeometry::Straight { start, end } => (end - start).normalized().map(|d| d.angle()),
            _ => None,
        }
    }

    /// Distance travelled along the segment at the projection of `p`.
    pub fn progress(&self, p: Vec2) -> f64 {
        match self.geometry {
            SegmentGeometry::Straight { start, end } => match (end - start).normalized() {
                Some(d) => (p - start).dot(d),
                None => 0.0,
            },
            SegmentGeometry::Orbit {
                center,
                radius,
                direction,
            } => {
                let phase = (p - center).angle();
                wrap_positive(direction.sign() * phase) * radius
            }
        }
    }

    /// Closest point of the segment geometry (the infinite line for straights).
    pub fn project(&self, p: Vec2) -> Vec2 {
        match self.geometry {
            SegmentGeometry::Straight { start, end } => match (end - start).normalized() {
                Some(d) => start + d * (p - start).dot(d),
                None => start,
            },
            SegmentGeometry::Orbit { center, radius, .. } => match (p - center).normalized() {
                Some(u) => center + u * radius,
                None => center + Vec2::new(radius, 0.0),
            },
        }
    }

    /// Signed cross-track error, positive to the left of a straight path or outside an orbit.
    pub fn cross_track(&self, p: Vec2) -> f64 {
        match self.geometry {
            SegmentGeometry::Straight { start, end } => match (end - start).normalized() {
                Some(d) => d.cross(p - start),
                None => p.distance(start),
            },
            SegmentGeometry::Orbit { center, radius, .. } => p.distance(center) - radius,
        }
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        let geometry = match self.geometry {
            SegmentGeometry::Straight { start, end } => SegmentGeometry::Straight {
                start: start + offset,
                end: end + offset,
            },
            SegmentGeometry::Orbit {
                center,
                radius,
                direction,
            } => SegmentGeometry::Orbit {
                center: center + offset,
                radius,
                direction,
            },
        };
        Self { geometry, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationSlot {
    pub leader_id: u8,
    /// (along-track, cross-track) in the leader's course frame; cross-track positive left.
    pub offset: Vec2,
    pub altitude_offset: f64,
}

impl FormationSlot {
    /// World-frame position of this slot for a leader at `leader_pos` on course `leader_course`.
    pub fn world_position(&self, leader_pos: Vec2, leader_course: f64) -> Vec2 {
        let t = Vec2::from_angle(leader_course);
        leader_pos + t * self.offset.x + t.perp_left() * self.offset.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandoffSpec {
    pub target: TargetEstimate,
    pub radius: f64,
    pub n_vehicles: usize,
    pub my_index: usize,
    pub altitude: f64,
    pub direction: OrbitDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSource {
    PathFollow,
    Formation,
    Standoff,
    Avoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceCommand {
    pub desired_course: f64,
    pub desired_speed: f64,
    pub desired_altitude: f64,
    pub source: GuidanceSource,
    /// Feed-forward course rate of the guidance field along the current motion, rad/s.
    #[serde(default)]
    pub course_rate: f64,
}

impl GuidanceCommand {
    pub fn is_finite(&self) -> bool {
        self.desired_course.is_finite()
            && self.desired_speed.is_finite()
            && self.desired_altitude.is_finite()
            && self.course_rate.is_finite()
    }

    /// Wings-level command along the current course.
    pub fn hold(state: &VehicleState, speed: f64, altitude: f64, source: GuidanceSource) -> Self {
        Self {
            desired_course: state.course,
            desired_speed: speed,
            desired_altitude: altitude,
            source,
            course_rate: 0.0,
        }
    }

    /// Roll set-point: feed-forward bank for the field's turn rate plus
    /// proportional course correction.
    pub fn roll_setpoint(&self, state: &VehicleState, platform: &PlatformConfig) -> f64 {
        let ff = (state.airspeed.max(platform.min_speed) * self.course_rate / GRAVITY).atan();
        let fb = platform.heading_gain * wrap_error(self.desired_course - state.course);
        (ff + fb).clamp(-platform.max_roll, platform.max_roll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceGains {
    /// Cross-track field gain, 1/m.
    pub k_vf: f64,
    /// Approach angle far from the path, rad.
    pub chi_inf: f64,
    /// Standoff spacing gain, (m/s)/rad.
    pub k_s: f64,
    /// Formation along-track speed gain, 1/s.
    pub k_v: f64,
    /// Leader progress-consensus gain, 1/s.
    pub k_c: f64,
    /// Protection radius, m.
    pub r_p: f64,
    /// Vertical separation below which a neighbor counts as a threat, m.
    pub vertical_band: f64,
    /// Obstacle lookahead distance, m.
    pub lookahead: f64,
    /// Leader state older than this is stale, s.
    pub staleness: f64,
}

impl Default for GuidanceGains {
    fn default() -> Self {
        Self {
            k_vf: 0.02,
            chi_inf: FRAC_PI_2,
            k_s: 6.0,
            k_v: 0.5,
            k_c: 0.05,
            r_p: 60.0,
            vertical_band: 15.0,
            lookahead: 100.0,
            staleness: 1.0,
        }
    }
}

impl GuidanceGains {
    /// Overrides one gain by name, as carried by parameter-change commands.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        let slot = match name {
            "k_vf" => &mut self.k_vf,
            "chi_inf" => &mut self.chi_inf,
            "k_s" => &mut self.k_s,
            "k_v" => &mut self.k_v,
            "k_c" => &mut self.k_c,
            "r_p" => &mut self.r_p,
            "vertical_band" => &mut self.vertical_band,
            "lookahead" => &mut self.lookahead,
            "staleness" => &mut self.staleness,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Speed envelope and gains of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub gains: GuidanceGains,
    pub min_speed: f64,
    pub cruise_speed: f64,
    pub max_speed: f64,
}

fn straight_field_course(gains: &GuidanceGains, path_course: f64, e: f64) -> f64 {
    wrap_angle(path_course - gains.chi_inf * (2.0 / PI) * (gains.k_vf * e).atan())
}

fn orbit_field(p: Vec2, center: Vec2, radius: f64, direction: OrbitDirection) -> Option<Vec2> {
    let r = p - center;
    let d = r.norm();
    if d == 0.0 {
        return None;
    }
    let rho = radius;
    let v = r * (-(d * d - rho * rho)) + r.perp_left() * (direction.sign() * 2.0 * d * rho);
    Some(v / (d * (d * d + rho * rho)))
}

impl Guidance {
    pub fn new(platform: &PlatformConfig, gains: GuidanceGains) -> Self {
        Self {
            gains,
            min_speed: platform.min_speed,
            cruise_speed: platform.cruise_speed,
            max_speed: platform.max_speed,
        }
    }

    pub fn clamp_speed(&self, v: f64) -> f64 {
        v.clamp(self.min_speed, self.max_speed)
    }

    fn ground_velocity(state: &VehicleState) -> Vec2 {
        Vec2::from_angle(state.course) * state.airspeed
    }

    pub fn vf_straight(&self, state: &VehicleState, seg: &PathSegment) -> Result<GuidanceCommand, GuidanceError> {
        let SegmentGeometry::Straight { start, end } = seg.geometry else {
            return Err(GuidanceError::WrongKind("straight"));
        };
        let dir = (end - start).normalized().ok_or(GuidanceError::DegenerateSegment)?;
        if !state.position.is_finite() {
            return Err(GuidanceError::NonFinite("vehicle position"));
        }
        let chi_path = dir.angle();
        let e = dir.cross(state.position - start);
        let course = straight_field_course(&self.gains, chi_path, e);
        let ahead = state.position + Self::ground_velocity(state) * FIELD_RATE_STEP;
        let ahead_course = straight_field_course(&self.gains, chi_path, dir.cross(ahead - start));
        Ok(GuidanceCommand {
            desired_course: course,
            desired_speed: self.clamp_speed(seg.desired_speed),
            desired_altitude: seg.desired_altitude,
            source: GuidanceSource::PathFollow,
            course_rate: wrap_error(ahead_course - course) / FIELD_RATE_STEP,
        })
    }

    pub fn vf_orbit(
        &self,
        state: &VehicleState,
        center: Vec2,
        radius: f64,
        direction: OrbitDirection,
    ) -> Result<GuidanceCommand, GuidanceError> {
        if !(state.position.is_finite() && center.is_finite() && radius.is_finite()) {
            return Err(GuidanceError::NonFinite("orbit input"));
        }
        let u = orbit_field(state.position, center, radius, direction)
            .ok_or(GuidanceError::OrbitCenter { hold: state.course })?;
        let course = u.angle();
        let ahead = state.position + Self::ground_velocity(state) * FIELD_RATE_STEP;
        let rate = orbit_field(ahead, center, radius, direction)
            .map(|v| wrap_error(v.angle() - course) / FIELD_RATE_STEP)
            .unwrap_or(0.0);
        Ok(GuidanceCommand {
            desired_course: wrap_angle(course),
            desired_speed: self.cruise_speed,
            desired_altitude: state.altitude,
            source: GuidanceSource::PathFollow,
            course_rate: rate,
        })
    }

    /// Follows one segment of either kind at the segment's speed and altitude.
    pub fn follow_segment(&self, state: &VehicleState, seg: &PathSegment) -> Result<GuidanceCommand, GuidanceError> {
        match seg.geometry {
            SegmentGeometry::Straight { .. } => self.vf_straight(state, seg),
            SegmentGeometry::Orbit {
                center,
                radius,
                direction,
            } => {
                let mut cmd = self.vf_orbit(state, center, radius, direction)?;
                cmd.desired_speed = self.clamp_speed(seg.desired_speed);
                cmd.desired_altitude = seg.desired_altitude;
                Ok(cmd)
            }
        }
    }

    /// Speed from the spacing error: half the difference between the phase
    /// gap to the vehicle ahead and the gap to the vehicle behind.
    pub fn spacing_error(own_phase: f64, others: &[f64], direction: OrbitDirection) -> Option<f64> {
        if others.is_empty() {
            return None;
        }
        let s = direction.sign();
        let ahead = others
            .iter()
            .map(|p| wrap_positive(s * (p - own_phase)))
            .fold(f64::INFINITY, f64::min);
        let behind = others
            .iter()
            .map(|p| wrap_positive(s * (own_phase - p)))
            .fold(f64::INFINITY, f64::min);
        Some(0.5 * (ahead - behind))
    }

    pub fn standoff_track(
        &self,
        state: &VehicleState,
        spec: &StandoffSpec,
        phases_of_others: &[f64],
    ) -> Result<GuidanceCommand, GuidanceError> {
        let target = spec.target;
        if !(target.position.is_finite() && target.velocity.is_finite()) {
            return Err(GuidanceError::NonFinite("target estimate"));
        }
        let u = orbit_field(state.position, target.position, spec.radius, spec.direction)
            .ok_or(GuidanceError::OrbitCenter { hold: state.course })?;
        let own_phase = (state.position - target.position).angle();
        let spacing = if spec.n_vehicles > 1 && phases_of_others.len() + 1 >= spec.n_vehicles {
            Self::spacing_error(own_phase, phases_of_others, spec.direction).unwrap_or(0.0)
        } else {
            0.0
        };
        let along = self.cruise_speed + self.gains.k_s * spacing;
        let desired = |p: Vec2, t_pos: Vec2| orbit_field(p, t_pos, spec.radius, spec.direction).map(|f| target.velocity + f * along);
        let v_des = target.velocity + u * along;
        let course = v_des.angle();
        let rate = desired(
            state.position + Self::ground_velocity(state) * FIELD_RATE_STEP,
            target.position + target.velocity * FIELD_RATE_STEP,
        )
        .map(|v| wrap_error(v.angle() - course) / FIELD_RATE_STEP)
        .unwrap_or(0.0);
        Ok(GuidanceCommand {
            desired_course: wrap_angle(course),
            desired_speed: self.clamp_speed(v_des.norm()),
            desired_altitude: spec.altitude,
            source: GuidanceSource::Standoff,
            course_rate: rate,
        })
    }

    pub fn follow_leader(
        &self,
        state: &VehicleState,
        leader: &VehicleState,
        slot: &FormationSlot,
        now: f64,
    ) -> Result<GuidanceCommand, GuidanceError> {
        let age = now - leader.timestamp;
        if !(age <= self.gains.staleness) {
            return Err(GuidanceError::StaleLeader { age });
        }
        if !(leader.is_finite() && state.position.is_finite()) {
            return Err(GuidanceError::NonFinite("leader state"));
        }
        let leader = extrapolate(leader, now);
        let leader_rate = GRAVITY / leader.airspeed.max(self.min_speed) * leader.roll.tan();
        let p_d = slot.world_position(leader.position, leader.course);
        let t = Vec2::from_angle(leader.course);
        let e_along = (p_d - state.position).dot(t);
        let e_line = t.cross(state.position - p_d);
        Ok(GuidanceCommand {
            desired_course: straight_field_course(&self.gains, leader.course, e_line),
            desired_speed: self.clamp_speed(leader.airspeed + self.gains.k_v * e_along),
            desired_altitude: leader.altitude + slot.altitude_offset,
            source: GuidanceSource::Formation,
            course_rate: leader_rate,
        })
    }

    /// Path following with a consensus speed term on path progress, in meters.
    pub fn coordinated_path_follow(
        &self,
        state: &VehicleState,
        seg: &PathSegment,
        progress_of_peers: &[(u8, f64)],
        my_progress: f64,
    ) -> Result<GuidanceCommand, GuidanceError> {
        let mut cmd = self.follow_segment(state, seg)?;
        if !progress_of_peers.is_empty() {
            let mean = progress_of_peers.iter().map(|(_, p)| p).sum::<f64>() / progress_of_peers.len() as f64;
            cmd.desired_speed = self.clamp_speed(seg.desired_speed + self.gains.k_c * (mean - my_progress));
        }
        Ok(cmd)
    }

    pub fn avoid(&self, state: &VehicleState, neighbors: &[VehicleState], obstacles: &[Circle]) -> Option<GuidanceCommand> {
        let g = &self.gains;
        let mut push = Vec2::ZERO;
        let mut threatened = false;
        for n in neighbors {
            let away = state.position - n.position;
            let d = away.norm();
            if d < g.r_p && (state.altitude - n.altitude).abs() < g.vertical_band {
                threatened = true;
                let dir = away.normalized().unwrap_or_else(|| -Vec2::from_angle(state.course));
                push += dir * ((g.r_p - d) / g.r_p);
            }
        }
        let heading = Vec2::from_angle(state.course);
        for o in obstacles {
            let away = state.position - o.center;
            let clearance = away.norm() - o.radius;
            let ahead = (o.center - state.position).dot(heading) > 0.0;
            if clearance < g.lookahead && (ahead || clearance < 0.0) {
                threatened = true;
                let dir = away.normalized().unwrap_or(-heading);
                push += dir * ((g.lookahead - clearance) / g.lookahead).min(2.0);
            }
        }
        if !threatened {
            return None;
        }
        let desired_course = match push.normalized() {
            None => state.course,
            Some(dir) => {
                let rel = wrap_error(dir.angle() - state.course);
                if (rel.abs() - PI).abs() < ASTERN_TIE {
                    wrap_angle(state.course - (PI - 0.1))
                } else {
                    wrap_angle(dir.angle())
                }
            }
        };
        Some(GuidanceCommand {
            desired_course,
            desired_speed: self.cruise_speed,
            desired_altitude: state.altitude,
            source: GuidanceSource::Avoid,
            course_rate: 0.0,
        })
    }
}

/// Dead-reckons a reported state forward to `now` along a steady turn.
pub fn extrapolate(s: &VehicleState, now: f64) -> VehicleState {
    let dt = now - s.timestamp;
    if dt <= 0.0 {
        return *s;
    }
    let rate = GRAVITY / s.airspeed.max(1.0) * s.roll.tan();
    let v = s.airspeed * s.pitch.cos();
    let position = if rate.abs() < 1e-9 {
        s.position + Vec2::from_angle(s.course) * (v * dt)
    } else {
        let r = v / rate;
        let c0 = s.course;
        let c1 = c0 + rate * dt;
        s.position + Vec2::new(c1.sin() - c0.sin(), c0.cos() - c1.cos()) * r
    };
    VehicleState {
        position,
        altitude: s.altitude + s.airspeed * s.pitch.sin() * dt,
        course: wrap_angle(s.course + rate * dt),
        timestamp: now,
        ..*s
    }
}
