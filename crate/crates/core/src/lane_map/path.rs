use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::spline::Spline2D;
use super::MapError;

/// Largest lateral distance at which a Cartesian state is still projected.
pub const MAX_LATERAL: f64 = 5.0;
/// Maximum spacing of the waypoints the centerline spline is fitted through.
const MAX_WAYPOINT_SPACING: f64 = 1.0;
/// Parameter samples per spline span when seeding projections.
const SEEDS_PER_SPAN: usize = 4;

/// Planar actor state: position (m), heading (rad), speed (m/s), acceleration (m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartesianState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
}

/// Longitudinal path coordinates. Lateral deviation is measured but not part
/// of the motion model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub lateral: f64,
    /// The point was (nearly) equidistant to separate path regions; the
    /// smallest arclength was taken.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FromFrenet {
    pub state: CartesianState,
    /// The arclength fell outside the path and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub point: [f64; 2],
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: f64,
    pub ambiguous: bool,
}

/// A traversed route: its segments, fitted centerline and landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    pub segment_ids: Vec<String>,
    spline: Spline2D,
    /// Arclength interval covered by each segment, parallel to `segment_ids`.
    segment_ranges: Vec<(f64, f64)>,
    pub landmarks: BTreeMap<String, f64>,
}

pub(crate) fn densify(points: &[[f64; 2]], max_spacing: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let pieces = (len / max_spacing).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let f = k as f64 / pieces as f64;
            out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
        }
    }
    out.push(*points.last().unwrap());
    out
}

impl RoutePath {
    /// Fits a path through a bare polyline (a single anonymous segment).
    pub fn from_points(points: &[[f64; 2]]) -> RoutePath {
        Self::from_segments(&[("path".to_string(), points.to_vec())])
    }

    /// Fits one spline through the concatenated centerlines of `segments`.
    pub fn from_segments(segments: &[(String, Vec<[f64; 2]>)]) -> RoutePath {
        let mut points: Vec<[f64; 2]> = Vec::new();
        let mut starts = Vec::with_capacity(segments.len());
        for (_, centerline) in segments {
            let dense = densify(centerline, MAX_WAYPOINT_SPACING);
            let mut iter = dense.into_iter();
            if let (Some(first), Some(last)) = (iter.clone().next(), points.last()) {
                if (first[0] - last[0]).hypot(first[1] - last[1]) < 1e-9 {
                    iter.next();
                }
            }
            starts.push(points.len().saturating_sub(usize::from(!points.is_empty())));
            points.extend(iter);
        }
        let spline = Spline2D::new(&points);
        let mut segment_ranges = Vec::with_capacity(segments.len());
        for (k, &start) in starts.iter().enumerate() {
            let end = starts.get(k + 1).copied().unwrap_or(points.len() - 1);
            segment_ranges.push((spline.knot_arclength(start), spline.knot_arclength(end)));
        }
        let mut landmarks = BTreeMap::new();
        landmarks.insert("lane_start".to_string(), 0.0);
        landmarks.insert("lane_end".to_string(), spline.total_length());
        RoutePath { segment_ids: segments.iter().map(|(id, _)| id.clone()).collect(), spline, segment_ranges, landmarks }
    }

    pub fn total_length(&self) -> f64 {
        self.spline.total_length()
    }

    pub fn spline(&self) -> &Spline2D {
        &self.spline
    }

    pub fn landmark(&self, name: &str) -> Option<f64> {
        self.landmarks.get(name).copied()
    }

    pub fn set_landmark(&mut self, name: &str, s: f64) {
        self.landmarks.insert(name.to_string(), s.clamp(0.0, self.total_length()));
    }

    /// Arclength interval `[start, end]` of a segment on this path.
    pub fn segment_range(&self, id: &str) -> Option<(f64, f64)> {
        self.segment_ids.iter().position(|s| s == id).map(|i| self.segment_ranges[i])
    }

    pub fn segment_ranges(&self) -> impl Iterator<Item = (&str, (f64, f64))> {
        self.segment_ids.iter().map(String::as_str).zip(self.segment_ranges.iter().copied())
    }

    /// Segment containing arclength `s` (the later one at a boundary).
    pub fn segment_at(&self, s: f64) -> &str {
        let idx = self
            .segment_ranges
            .iter()
            .rposition(|&(start, _)| s >= start)
            .unwrap_or(0);
        &self.segment_ids[idx]
    }

    pub fn position(&self, s: f64) -> [f64; 2] {
        self.spline.position(s)
    }

    pub fn heading(&self, s: f64) -> f64 {
        self.spline.heading(s)
    }

    /// Closest point on the path to `(x, y)`.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        let p = [x, y];
        let seeds = self.spline.seed_params(SEEDS_PER_SPAN);
        let dist2 = |u: f64| {
            let (r, _, _) = self.spline.eval_param(u);
            (r[0] - x).powi(2) + (r[1] - y).powi(2)
        };
        let d: Vec<f64> = seeds.iter().map(|&u| dist2(u)).collect();
        let mut candidates: Vec<(f64, f64)> = Vec::new();
        for i in 0..seeds.len() {
            let left = if i > 0 { d[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < seeds.len() { d[i + 1] } else { f64::INFINITY };
            if d[i] <= left && d[i] <= right {
                let lo = seeds[i.saturating_sub(1)];
                let hi = seeds[(i + 1).min(seeds.len() - 1)];
                let u = self.spline.refine_projection(p, seeds[i], lo, hi);
                candidates.push((u, dist2(u).sqrt()));
            }
        }
        let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let mut near: Vec<(f64, f64)> = candidates.into_iter().filter(|c| c.1 <= best + 1e-6).collect();
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (u, _) = near[0];
        let s = self.spline.arclength_at_param(u);
        let ambiguous = near.iter().any(|&(u2, _)| (self.spline.arclength_at_param(u2) - s).abs() > 0.5);
        let (r, dr, _) = self.spline.eval_param(u);
        let norm = dr[0].hypot(dr[1]);
        let lateral = (dr[0] * (y - r[1]) - dr[1] * (x - r[0])) / norm;
        Projection { s, point: r, lateral, ambiguous }
    }

    /// Cartesian state to longitudinal path coordinates.
    pub fn to_frenet(&self, state: &CartesianState) -> Result<FrenetState, MapError> {
        let proj = self.project(state.x, state.y);
        if proj.lateral.abs() > MAX_LATERAL {
            return Err(MapError::OffPath { x: state.x, y: state.y, distance: proj.lateral.abs() });
        }
        let delta = state.theta - self.heading(proj.s);
        let cos = delta.cos();
        Ok(FrenetState {
            s: proj.s,
            s_dot: state.v * cos,
            s_ddot: state.a * cos.abs(),
            lateral: proj.lateral,
            ambiguous: proj.ambiguous,
        })
    }

    /// Longitudinal coordinates to a Cartesian state; `s` is clamped to the path.
    pub fn from_frenet(&self, s: f64, s_dot: f64, s_ddot: f64) -> FromFrenet {
        let clamped = !(0.0..=self.total_length()).contains(&s);
        let s = s.clamp(0.0, self.total_length());
        let [x, y] = self.position(s);
        let mut theta = self.heading(s);
        if s_dot < 0.0 {
            theta = wrap_angle(theta + PI);
        }
        FromFrenet { state: CartesianState { x, y, theta, v: s_dot.abs(), a: s_ddot }, clamped }
    }

    pub fn from_frenet_strict(&self, s: f64, s_dot: f64, s_ddot: f64) -> Result<CartesianState, MapError> {
        let out = self.from_frenet(s, s_dot, s_ddot);
        if out.clamped {
            return Err(MapError::OutsidePath { s, length: self.total_length() });
        }
        Ok(out.state)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}
