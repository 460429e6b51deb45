//! Geospatial reasoning: great-circle distance, travel time, point-in-polygon,
//! centroids, proximity and per-region aggregation.
//!
//! Distances are on a sphere of mean Earth radius. Polygon predicates work
//! directly in the lon/lat plane, which is adequate for city-scale zones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Agent, GeoPoint, Region, RegionId, TaskState, TaskTypeId, WorldState};

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Seconds for `agent` to cover the straight great-circle leg.
pub fn travel_time(agent: &Agent, from: GeoPoint, to: GeoPoint) -> Result<f64> {
    if !(agent.speed.is_finite() && agent.speed > 0.0) {
        return Err(Error::Validation(vec![crate::model::Violation::new(
            format!("agents/{}/speed", agent.id),
            "speed must be > 0",
        )]));
    }
    Ok(haversine_distance(from, to) / agent.speed)
}

/// Point on the great circle from `a` to `b` at `fraction` of the way.
pub fn intermediate_point(a: GeoPoint, b: GeoPoint, fraction: f64) -> GeoPoint {
    if fraction <= 0.0 || a == b {
        return a;
    }
    if fraction >= 1.0 {
        return b;
    }
    let delta = haversine_distance(a, b) / EARTH_RADIUS_M;
    if delta < 1e-12 {
        return b;
    }
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let wa = ((1.0 - fraction) * delta).sin() / delta.sin();
    let wb = (fraction * delta).sin() / delta.sin();
    let x = wa * lat1.cos() * lon1.cos() + wb * lat2.cos() * lon2.cos();
    let y = wa * lat1.cos() * lon1.sin() + wb * lat2.cos() * lon2.sin();
    let z = wa * lat1.sin() + wb * lat2.sin();
    GeoPoint::new(y.atan2(x).to_degrees(), z.atan2((x * x + y * y).sqrt()).to_degrees())
}

/// Advance from `from` toward `to` by `meters`, stopping exactly at `to`.
pub fn move_toward(from: GeoPoint, to: GeoPoint, meters: f64) -> GeoPoint {
    let total = haversine_distance(from, to);
    if meters >= total {
        to
    } else {
        intermediate_point(from, to, meters / total)
    }
}

fn on_edge(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1e-300);
    cross.abs() <= 1e-12 * scale
        && p.lon >= a.lon.min(b.lon) - 1e-12
        && p.lon <= a.lon.max(b.lon) + 1e-12
        && p.lat >= a.lat.min(b.lat) - 1e-12
        && p.lat <= a.lat.max(b.lat) + 1e-12
}

/// Even-odd containment; boundary points count as inside.
pub fn point_in_region(p: GeoPoint, r: &Region) -> bool {
    let ring = &r.boundary;
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if on_edge(p, a, b) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub point: GeoPoint,
    /// Zero-area polygon; `point` is then the vertex average.
    pub degenerate: bool,
}

pub fn region_centroid(r: &Region) -> Centroid {
    let ring = &r.boundary;
    let n = ring.len();
    if n == 0 {
        return Centroid { point: GeoPoint::new(0.0, 0.0), degenerate: true };
    }
    // Shift to the first vertex to keep the shoelace sums well conditioned.
    let o = ring[0];
    let (mut area2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x0, y0) = (ring[i].lon - o.lon, ring[i].lat - o.lat);
        let (x1, y1) = (ring[(i + 1) % n].lon - o.lon, ring[(i + 1) % n].lat - o.lat);
        let c = x0 * y1 - x1 * y0;
        area2 += c;
        cx += (x0 + x1) * c;
        cy += (y0 + y1) * c;
    }
    let extent = ring.iter().map(|p| (p.lon - o.lon).abs().max((p.lat - o.lat).abs())).fold(0.0_f64, f64::max);
    if area2.abs() <= 1e-12 * extent * extent || extent == 0.0 {
        let k = n as f64;
        let lon = ring.iter().map(|p| p.lon).sum::<f64>() / k;
        let lat = ring.iter().map(|p| p.lat).sum::<f64>() / k;
        return Centroid { point: GeoPoint::new(lon, lat), degenerate: true };
    }
    Centroid { point: GeoPoint::new(o.lon + cx / (3.0 * area2), o.lat + cy / (3.0 * area2)), degenerate: false }
}

/// Id of the candidate closest to `p`; ties go to the smallest id.
pub fn nearest<'a>(p: GeoPoint, candidates: &'a [(String, GeoPoint)]) -> Result<&'a str> {
    candidates
        .iter()
        .map(|(id, q)| (haversine_distance(p, *q), id.as_str()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
        .ok_or_else(|| Error::Contract("nearest() needs at least one candidate".into()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub revealed: u32,
    pub in_progress: u32,
    pub done: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: RegionId,
    pub per_type_counts: BTreeMap<TaskTypeId, StateCounts>,
    /// Agent-seconds still to be spent on revealed and in-progress tasks.
    pub total_remaining_workload: f64,
}

/// One summary per region, in region-id order; hidden tasks are left out.
pub fn aggregate_by_region(world: &WorldState) -> Vec<RegionSummary> {
    let mut out: BTreeMap<&str, RegionSummary> = world
        .regions
        .keys()
        .map(|id| {
            (
                id.as_str(),
                RegionSummary { region: id.clone(), per_type_counts: BTreeMap::new(), total_remaining_workload: 0.0 },
            )
        })
        .collect();
    for t in world.macro_tasks.values() {
        let Some(s) = out.get_mut(t.region.as_str()) else { continue };
        if t.state == TaskState::Hidden {
            continue;
        }
        let c = s.per_type_counts.entry(t.task_type.clone()).or_default();
        match t.state {
            TaskState::Revealed => c.revealed += 1,
            TaskState::InProgress => c.in_progress += 1,
            TaskState::Done => c.done += 1,
            TaskState::Hidden => unreachable!(),
        }
        if t.state.is_open() {
            s.total_remaining_workload += world.remaining_workload(t);
        }
    }
    out.into_values().collect()
}
