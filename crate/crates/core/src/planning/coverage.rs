//! Boustrophedon coverage of a search polygon.

use super::PlanningError;
use crate::geometry::{Polygon, Vec2};
use crate::guidance::PathSegment;

pub const DEFAULT_FOOTPRINT: f64 = 100.0;

/// Clips a polygon to the half-plane `n·p >= c`.
fn clip(poly: &[Vec2], n: Vec2, c: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (da, db) = (n.dot(a) - c, n.dot(b) - c);
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(a.lerp(b, da / (da - db)));
        }
    }
    out
}

/// Direction of the longest polygon edge.
pub fn sweep_direction(area: &Polygon) -> Option<Vec2> {
    area.edges()
        .max_by(|(a1, b1), (a2, b2)| a1.distance(*b1).total_cmp(&a2.distance(*b2)))
        .and_then(|(a, b)| (b - a).normalized())
}

/// Sweep legs as (start, end) pairs, alternating direction.
pub fn sweep_legs(area: &Polygon, footprint: f64) -> Result<Vec<(Vec2, Vec2)>, PlanningError> {
    if !(footprint.is_finite() && footprint > 0.0) {
        return Err(PlanningError::NonFinite);
    }
    if area.vertices.len() < 3 || area.vertices.iter().any(|v| !v.is_finite()) {
        return Err(PlanningError::DegeneratePolygon);
    }
    if area.area() <= 1e-6 || !area.is_simple() {
        return Err(PlanningError::DegeneratePolygon);
    }
    let u = sweep_direction(area).ok_or(PlanningError::DegeneratePolygon)?;
    let v = u.perp_left();
    let (vmin, vmax) = area
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(v.dot(*p)), hi.max(v.dot(*p))));
    let width = vmax - vmin;
    let count = ((width / footprint) - 1e-9).ceil().max(1.0) as usize;
    let first = vmin + (width - (count - 1) as f64 * footprint) / 2.0;
    let mut legs = Vec::with_capacity(count);
    for i in 0..count {
        let centre = first + i as f64 * footprint;
        let band = clip(&clip(&area.vertices, v, centre - footprint / 2.0), -v, -(centre + footprint / 2.0));
        if band.is_empty() {
            continue;
        }
        let (umin, umax) = band
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(u.dot(*p)), hi.max(u.dot(*p))));
        let a = u * umin + v * centre;
        let b = u * umax + v * centre;
        legs.push(if legs.len() % 2 == 0 { (a, b) } else { (b, a) });
    }
    Ok(legs)
}

/// Transit from `from` to the first sweep leg, then the sweep itself with
/// straight connectors between legs.
pub fn plan_tracking(
    area: &Polygon,
    turn_radius: f64,
    footprint: f64,
    from: Vec2,
    speed: f64,
    altitude: f64,
) -> Result<Vec<PathSegment>, PlanningError> {
    plan_tracking_share(area, turn_radius, footprint, from, speed, altitude, 0, 1)
}

/// Like [`plan_tracking`], flying only legs `k, k + n, k + 2n, ...` of the
/// sweep so `n` vehicles split the area between them.
#[allow(clippy::too_many_arguments)]
pub fn plan_tracking_share(
    area: &Polygon,
    turn_radius: f64,
    footprint: f64,
    from: Vec2,
    speed: f64,
    altitude: f64,
    k: usize,
    n: usize,
) -> Result<Vec<PathSegment>, PlanningError> {
    if !turn_radius.is_finite() || turn_radius < 0.0 || !from.is_finite() {
        return Err(PlanningError::NonFinite);
    }
    if n == 0 || k >= n {
        return Err(PlanningError::Degenerate("sweep share".into()));
    }
    let all = sweep_legs(area, footprint)?;
    let mut legs: Vec<(Vec2, Vec2)> = all.iter().skip(k).step_by(n).copied().collect();
    if legs.is_empty() {
        legs.push(all[k % all.len()]);
    }
    let mut points = vec![from];
    for (a, b) in &legs {
        points.push(*a);
        points.push(*b);
    }
    points.dedup_by(|a, b| a.distance(*b) < 1e-9);
    if points.len() == 1 {
        let (a, b) = legs[0];
        points = vec![a, b];
    }
    Ok(super::path::segments_from_waypoints(&points, speed, altitude))
}

/// Fraction of grid samples inside `area` within `footprint / 2` of the route.
pub fn coverage_fraction(area: &Polygon, route: &[PathSegment], footprint: f64, grid: f64) -> f64 {
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in &area.vertices {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let (mut inside, mut covered) = (0u64, 0u64);
    let mut y = lo.y + grid / 2.0;
    while y < hi.y {
        let mut x = lo.x + grid / 2.0;
        while x < hi.x {
            let p = Vec2::new(x, y);
            if area.contains(p) {
                inside += 1;
                if route
                    .iter()
                    .any(|s| crate::geometry::point_segment_distance(p, s.start(), s.end()) <= footprint / 2.0 + 1e-9)
                {
                    covered += 1;
                }
            }
            x += grid;
        }
        y += grid;
    }
    if inside == 0 {
        0.0
    } else {
        covered as f64 / inside as f64
    }
}
