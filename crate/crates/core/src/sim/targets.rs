//! Ground targets, the geometric detection model and multi-agent fusion.

use super::config::{SensorConfig, TargetConfig};
use crate::geometry::{Polygon, Vec2};
use crate::guidance::TargetEstimate;
use crate::swarmnet::message::Detection;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub id: u8,
    pub position: Vec2,
    pub velocity: Vec2,
    pub shelters: Vec<Polygon>,
}

/// Target position evaluated in closed form from its piecewise-constant velocity.
pub fn target_at(cfg: &TargetConfig, t: f64) -> TargetTruth {
    let mut pos = cfg.position;
    let mut vel = cfg.velocity;
    let mut since = 0.0;
    for c in &cfg.changes {
        if c.at > t {
            break;
        }
        pos = pos + vel * (c.at - since);
        since = c.at;
        vel = c.velocity;
    }
    TargetTruth {
        id: cfg.id,
        position: pos + vel * (t - since).max(0.0),
        velocity: vel,
        shelters: cfg.shelters.clone(),
    }
}

pub fn line_of_sight(from: Vec2, to: Vec2, shelters: &[Polygon]) -> bool {
    !shelters.iter().any(|p| p.blocks_segment(from, to))
}

/// Reports for every target inside the footprint with a clear line of sight.
pub fn detect_targets<R: Rng + ?Sized>(
    position: Vec2,
    time: f64,
    targets: &[TargetTruth],
    sensor: &SensorConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let normal = Normal::new(0.0, sensor.noise_stddev.max(0.0)).expect("stddev is non-negative");
    let mut out = Vec::new();
    for t in targets {
        if position.distance(t.position) > sensor.footprint || !line_of_sight(position, t.position, &t.shelters) {
            continue;
        }
        let noise = if sensor.noise_stddev > 0.0 {
            Vec2::new(normal.sample(rng), normal.sample(rng))
        } else {
            Vec2::ZERO
        };
        let p = t.position + noise;
        out.push(Detection {
            time_ms: (time * 1000.0).round() as u32,
            target_id: t.id,
            position: [p.x as f32, p.y as f32],
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Report {
    time: f64,
    position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fused {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Time of the newest report that went into the estimate.
    pub updated: f64,
    /// Agents with a report inside the fusion window.
    pub reporters: usize,
}

/// Target acceleration noise of the constant-velocity model, m²/s³.
const ACCEL_NOISE: f64 = 0.2;
const INITIAL_SPEED_STDDEV: f64 = 5.0;
const MIN_MEASUREMENT_STDDEV: f64 = 0.5;

/// Constant-velocity Kalman filter on one axis: state (position, velocity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Axis {
    x: [f64; 2],
    p: [[f64; 2]; 2],
}

impl Axis {
    fn new(z: f64, r: f64) -> Self {
        Self {
            x: [z, 0.0],
            p: [[r, 0.0], [0.0, INITIAL_SPEED_STDDEV * INITIAL_SPEED_STDDEV]],
        }
    }

    fn predict(&mut self, dt: f64) {
        let [[a, b], [_, d]] = self.p;
        let q = ACCEL_NOISE;
        self.x[0] += self.x[1] * dt;
        let pa = a + 2.0 * dt * b + dt * dt * d + q * dt.powi(3) / 3.0;
        let pb = b + dt * d + q * dt * dt / 2.0;
        let pd = d + q * dt;
        self.p = [[pa, pb], [pb, pd]];
    }

    fn correct(&mut self, z: f64, r: f64) {
        let [[a, b], [_, d]] = self.p;
        let s = a + r;
        let (k0, k1) = (a / s, b / s);
        let y = z - self.x[0];
        self.x[0] += k0 * y;
        self.x[1] += k1 * y;
        self.p = [[(1.0 - k0) * a, (1.0 - k0) * b], [(1.0 - k0) * b, d - k1 * b]];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Track {
    axes: [Axis; 2],
    time: f64,
}

/// Tracks each target with a Kalman filter fed every agent's reports in time
/// order; between reports the estimate coasts on its velocity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetFusion {
    window: f64,
    noise: f64,
    reports: BTreeMap<u8, BTreeMap<u8, Report>>,
    pending: Vec<(u8, Report)>,
    tracks: BTreeMap<u8, Track>,
    fused: BTreeMap<u8, Fused>,
}

impl TargetFusion {
    pub fn new(window: f64, noise_stddev: f64) -> Self {
        Self {
            window,
            noise: noise_stddev.max(MIN_MEASUREMENT_STDDEV),
            ..Self::default()
        }
    }

    pub fn report(&mut self, from: u8, d: &Detection) {
        let r = Report {
            time: d.time_ms as f64 / 1000.0,
            position: Vec2::new(d.position[0] as f64, d.position[1] as f64),
        };
        let per = self.reports.entry(d.target_id).or_default();
        if per.get(&from).is_some_and(|old| old.time >= r.time) {
            return;
        }
        per.insert(from, r);
        self.pending.push((d.target_id, r));
    }

    /// Folds new reports into the estimates at time `now`.
    pub fn update(&mut self, now: f64) {
        let r = self.noise * self.noise;
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
        for (target, rep) in pending {
            let z = rep.position;
            match self.tracks.get_mut(&target) {
                None => {
                    self.tracks.insert(
                        target,
                        Track {
                            axes: [Axis::new(z.x, r), Axis::new(z.y, r)],
                            time: rep.time,
                        },
                    );
                }
                Some(t) => {
                    let dt = rep.time - t.time;
                    let z = if dt >= 0.0 {
                        t.axes.iter_mut().for_each(|a| a.predict(dt));
                        t.time = rep.time;
                        z
                    } else {
                        // Late report: carry it forward on the current velocity.
                        z + Vec2::new(t.axes[0].x[1], t.axes[1].x[1]) * -dt
                    };
                    t.axes[0].correct(z.x, r);
                    t.axes[1].correct(z.y, r);
                }
            }
        }
        for (target, t) in &self.tracks {
            let reporters = self.reports.get_mut(target).map_or(0, |per| {
                per.retain(|_, rep| now - rep.time <= self.window);
                per.len()
            });
            self.fused.insert(
                *target,
                Fused {
                    position: Vec2::new(t.axes[0].x[0], t.axes[1].x[0]),
                    velocity: Vec2::new(t.axes[0].x[1], t.axes[1].x[1]),
                    updated: t.time,
                    reporters,
                },
            );
        }
    }

    pub fn fused(&self, target: u8) -> Option<&Fused> {
        self.fused.get(&target)
    }

    /// Estimate for the lowest-numbered known target, extrapolated to `now`.
    pub fn estimate(&self, now: f64) -> Option<(u8, TargetEstimate)> {
        self.fused.iter().next().map(|(id, f)| {
            (
                *id,
                TargetEstimate {
                    position: f.position + f.velocity * (now - f.updated),
                    velocity: f.velocity,
                },
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::VelocityChange;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sensor(noise: f64) -> SensorConfig {
        SensorConfig {
            footprint: 150.0,
            noise_stddev: noise,
            fusion_window: 2.0,
        }
    }

    fn truth(shelters: Vec<Polygon>) -> TargetTruth {
        TargetTruth {
            id: 1,
            position: Vec2::new(100.0, 0.0),
            velocity: Vec2::ZERO,
            shelters,
        }
    }

    #[test]
    fn piecewise_motion() {
        let cfg = TargetConfig {
            id: 1,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            changes: vec![VelocityChange {
                at: 10.0,
                velocity: Vec2::new(3.0, 0.0),
            }],
            shelters: vec![],
        };
        assert_eq!(target_at(&cfg, 5.0).position, Vec2::ZERO);
        assert_eq!(target_at(&cfg, 20.0).position, Vec2::new(30.0, 0.0));
    }

    #[test]
    fn noiseless_detection_is_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = detect_targets(Vec2::ZERO, 1.0, &[truth(vec![])], &sensor(0.0), &mut rng);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].position, [100.0, 0.0]);
        assert!(detect_targets(Vec2::new(-100.0, 0.0), 1.0, &[truth(vec![])], &sensor(0.0), &mut rng).is_empty());
    }

    #[test]
    fn shelter_blocks_one_observer() {
        let wall = Polygon::rectangle(Vec2::new(40.0, -10.0), Vec2::new(60.0, 10.0));
        let t = [truth(vec![wall])];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(detect_targets(Vec2::ZERO, 0.0, &t, &sensor(0.0), &mut rng).is_empty());
        assert_eq!(detect_targets(Vec2::new(100.0, 80.0), 0.0, &t, &sensor(0.0), &mut rng).len(), 1);
    }

    #[test]
    fn fusion_averages_and_coasts() {
        let mut f = TargetFusion::new(2.0, 0.5);
        let d = |t: f64, x: f32| Detection {
            time_ms: (t * 1000.0) as u32,
            target_id: 1,
            position: [x, 0.0],
        };
        f.report(1, &d(0.0, 0.0));
        f.report(2, &d(0.0, 2.0));
        f.update(0.0);
        assert_eq!(f.fused(1).unwrap().position, Vec2::new(1.0, 0.0));
        for k in 1..=40 {
            let t = k as f64 * 0.5;
            f.report(1, &d(t, (1.0 + 3.0 * t) as f32));
            f.update(t);
        }
        let v = f.fused(1).unwrap().velocity;
        assert!((v.x - 3.0).abs() < 0.1, "{v:?}");
        f.update(30.0);
        let (_, e) = f.estimate(30.0).unwrap();
        assert_eq!(f.fused(1).unwrap().reporters, 0);
        assert!((e.position.x - 91.0).abs() < 2.0, "{e:?}");
    }
}
