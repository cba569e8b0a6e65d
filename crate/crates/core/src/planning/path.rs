//! Collision-free route planning over circular threats.
//!
//! Threats are inflated by the turn radius and replaced by circumscribed
//! polygons; the route is the shortest path through the visibility graph of
//! the polygon vertices.

use super::PlanningError;
use crate::geometry::{Circle, Vec2};
use crate::guidance::PathSegment;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Vertices per circumscribed threat polygon.
pub const THREAT_POLYGON_SIDES: usize = 16;

/// Segment clearance test against the inflated discs, with a small tolerance
/// for segments that run exactly along a polygon edge.
fn segment_clear(a: Vec2, b: Vec2, discs: &[Circle]) -> bool {
    discs
        .iter()
        .all(|c| !c.inflated(-1e-6 * c.radius.max(1.0)).intersects_segment(a, b))
}

fn polygon_nodes(discs: &[Circle], sides: usize) -> Vec<Vec2> {
    let scale = 1.0 / (std::f64::consts::PI / sides as f64).cos();
    let mut nodes = Vec::new();
    for c in discs {
        for k in 0..sides {
            let a = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            // A hair outside the circumscribed radius keeps edges clear of the disc.
            let p = c.center + Vec2::from_angle(a) * (c.radius * scale * (1.0 + 1e-9));
            if discs.iter().all(|d| !d.contains(p)) {
                nodes.push(p);
            }
        }
    }
    nodes
}

#[derive(PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest polyline from `start` to `goal` avoiding the discs, using
/// `sides`-gon approximations of each disc.
pub fn shortest_route(start: Vec2, goal: Vec2, discs: &[Circle], sides: usize) -> Result<Vec<Vec2>, PlanningError> {
    let mut nodes = vec![start, goal];
    nodes.extend(polygon_nodes(discs, sides));
    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[0] = 0.0;
    heap.push(State { cost: 0.0, node: 0 });
    while let Some(State { cost, node }) = heap.pop() {
        if node == 1 {
            break;
        }
        if cost > dist[node] {
            continue;
        }
        for next in 0..n {
            if next == node {
                continue;
            }
            let step = nodes[node].distance(nodes[next]);
            let candidate = cost + step;
            if candidate < dist[next] && segment_clear(nodes[node], nodes[next], discs) {
                dist[next] = candidate;
                prev[next] = node;
                heap.push(State {
                    cost: candidate,
                    node: next,
                });
            }
        }
    }
    if !dist[1].is_finite() {
        return Err(PlanningError::NoRoute);
    }
    let mut route = vec![goal];
    let mut at = 1;
    while at != 0 {
        at = prev[at];
        route.push(nodes[at]);
    }
    route.reverse();
    Ok(route)
}

pub fn route_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Straight segments joining consecutive waypoints.
pub fn segments_from_waypoints(points: &[Vec2], speed: f64, altitude: f64) -> Vec<PathSegment> {
    points
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| PathSegment::straight(w[0], w[1], speed, altitude))
        .collect()
}

/// Plans a route from `start` to `goal` that keeps at least `turn_radius`
/// clearance from every threat.
pub fn plan_path(
    start: Vec2,
    goal: Vec2,
    threats: &[Circle],
    turn_radius: f64,
    speed: f64,
    altitude: f64,
) -> Result<Vec<PathSegment>, PlanningError> {
    if !(start.is_finite() && goal.is_finite() && turn_radius.is_finite() && turn_radius >= 0.0) {
        return Err(PlanningError::NonFinite);
    }
    if start.distance(goal) < 1e-9 {
        return Err(PlanningError::Degenerate("start equals goal".into()));
    }
    if threats.iter().any(|t| !(t.center.is_finite() && t.radius.is_finite() && t.radius >= 0.0)) {
        return Err(PlanningError::NonFinite);
    }
    if threats.iter().any(|t| t.contains(goal)) {
        return Err(PlanningError::GoalInsideThreat);
    }
    let discs: Vec<Circle> = threats.iter().map(|t| t.inflated(turn_radius)).collect();
    if discs.iter().any(|d| d.contains(start)) {
        return Err(PlanningError::StartInsideThreat);
    }
    if discs.iter().any(|d| d.contains(goal)) {
        return Err(PlanningError::NoRoute);
    }
    let route = shortest_route(start, goal, &discs, THREAT_POLYGON_SIDES)?;
    Ok(segments_from_waypoints(&route, speed, altitude))
}
