//! One-by-one launch and landing schedules.

use serde::{Deserialize, Serialize};

/// Time to cover `distance` from rest at constant acceleration, reaching `speed` at the end.
pub fn taxi_time(distance: f64, speed: f64) -> f64 {
    2.0 * distance / speed
}

/// (distance covered, ground speed) `elapsed` seconds into the taxi run.
pub fn taxi_kinematics(elapsed: f64, distance: f64, speed: f64) -> (f64, f64) {
    let total = taxi_time(distance, speed);
    let t = elapsed.clamp(0.0, total);
    let a = speed / total;
    (0.5 * a * t * t, a * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchSlot {
    pub agent: u8,
    pub taxi_start: f64,
    pub liftoff: f64,
}

/// Agent `k` (0-based roster order) starts taxiing at `t0 + lead + k·spacing`
/// and lifts off `taxi` seconds later.
pub fn launch_sequencer(roster: &[u8], t0: f64, lead: f64, spacing: f64, taxi: f64) -> Vec<LaunchSlot> {
    roster
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let taxi_start = t0 + lead + k as f64 * spacing;
            LaunchSlot {
                agent: *id,
                taxi_start,
                liftoff: taxi_start + taxi,
            }
        })
        .collect()
}

/// Start of agent `rank`'s final approach.
pub fn landing_slot(rank: usize, t0: f64, lead: f64, spacing: f64) -> f64 {
    t0 + lead + rank as f64 * spacing
}

/// Spacing that puts the `n`-th liftoff `last_liftoff` seconds after the launch command.
pub fn fitted_spacing(n: usize, last_liftoff: f64, taxi: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (last_liftoff - taxi) / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_five_negligible_taxi() {
        let s = launch_sequencer(&[1, 2, 3], 2.0, 0.0, 5.0, 0.0);
        assert_eq!(s.iter().map(|x| x.liftoff).collect::<Vec<_>>(), vec![2.0, 7.0, 12.0]);
    }

    #[test]
    fn twenty_meter_taxi() {
        let t = taxi_time(20.0, 13.0);
        assert!((t - 40.0 / 13.0).abs() < 1e-12);
        let (d, v) = taxi_kinematics(t, 20.0, 13.0);
        assert!((d - 20.0).abs() < 1e-12 && (v - 13.0).abs() < 1e-12);
        assert_eq!(taxi_kinematics(-1.0, 20.0, 13.0), (0.0, 0.0));
    }

    #[test]
    fn fitted_spacing_hits_last_liftoff() {
        let taxi = taxi_time(20.0, 13.0);
        let s = fitted_spacing(21, 110.43, taxi);
        let roster: Vec<u8> = (1..=21).collect();
        let slots = launch_sequencer(&roster, 0.0, 0.0, s, taxi);
        assert!((slots[20].liftoff - 110.43).abs() < 1e-9);
    }
}
