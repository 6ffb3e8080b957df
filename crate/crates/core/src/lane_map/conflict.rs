use serde::{Deserialize, Serialize};

use super::{MapError, RoutePath};

/// Sampling step along both paths for transversal crossing detection.
const SAMPLE_STEP: f64 = 0.1;
/// Points per bounding-box chunk.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub point: [f64; 2],
    pub frac_a: f64,
    pub frac_b: f64,
    /// Arclength of the point on path A.
    pub s_a: f64,
    /// Arclength of the point on path B.
    pub s_b: f64,
}

impl ConflictPoint {
    fn at(a: &RoutePath, b: &RoutePath, s_a: f64, s_b: f64) -> ConflictPoint {
        ConflictPoint {
            point: a.position(s_a),
            frac_a: s_a / a.total_length(),
            frac_b: s_b / b.total_length(),
            s_a,
            s_b,
        }
    }
}

/// Locates where two paths meet.
///
/// Paths sharing trailing segments conflict at the entry of the first shared
/// segment; paths sharing leading segments at the end of the last shared one.
/// Otherwise the first transversal crossing along `a` is returned.
pub fn conflict_point(a: &RoutePath, b: &RoutePath) -> Result<ConflictPoint, MapError> {
    let suffix = a.segment_ids.iter().rev().zip(b.segment_ids.iter().rev()).take_while(|(x, y)| x == y).count();
    if suffix > 0 {
        let id = &a.segment_ids[a.segment_ids.len() - suffix];
        let s_a = a.segment_range(id).unwrap().0;
        let s_b = b.segment_range(id).unwrap().0;
        return Ok(ConflictPoint::at(a, b, s_a, s_b));
    }
    let prefix = a.segment_ids.iter().zip(&b.segment_ids).take_while(|(x, y)| x == y).count();
    if prefix > 0 {
        let id = &a.segment_ids[prefix - 1];
        let s_a = a.segment_range(id).unwrap().1;
        let s_b = b.segment_range(id).unwrap().1;
        return Ok(ConflictPoint::at(a, b, s_a, s_b));
    }
    crossing(a, b).ok_or(MapError::NoConflict)
}

/// Sets the `lane_turn` landmark on both paths and returns the conflict.
pub fn register_conflict(a: &mut RoutePath, b: &mut RoutePath) -> Result<ConflictPoint, MapError> {
    let c = conflict_point(a, b)?;
    a.set_landmark("lane_turn", c.s_a);
    b.set_landmark("lane_turn", c.s_b);
    Ok(c)
}

fn samples(path: &RoutePath) -> Vec<(f64, [f64; 2])> {
    let n = (path.total_length() / SAMPLE_STEP).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let s = path.total_length() * i as f64 / n as f64;
            (s, path.position(s))
        })
        .collect()
}

fn bbox(points: &[(f64, [f64; 2])]) -> [f64; 4] {
    points.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, (_, p)| {
        [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
    })
}

fn overlaps(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

/// Parameters `(u, w)` in [0, 1] of the intersection of segments `p0p1` and `q0q1`.
fn segment_intersection(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<(f64, f64)> {
    let r = [p1[0] - p0[0], p1[1] - p0[1]];
    let s = [q1[0] - q0[0], q1[1] - q0[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-15 {
        return None;
    }
    let d = [q0[0] - p0[0], q0[1] - p0[1]];
    let u = (d[0] * s[1] - d[1] * s[0]) / denom;
    let w = (d[0] * r[1] - d[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&w)).then_some((u, w))
}

fn crossing(a: &RoutePath, b: &RoutePath) -> Option<ConflictPoint> {
    let sa = samples(a);
    let sb = samples(b);
    let chunks = |v: &[(f64, [f64; 2])]| -> Vec<(usize, [f64; 4])> {
        (0..v.len() - 1).step_by(CHUNK).map(|i| (i, bbox(&v[i..(i + CHUNK + 1).min(v.len())]))).collect()
    };
    let ca = chunks(&sa);
    let cb = chunks(&sb);
    for &(ia, box_a) in &ca {
        let mut best: Option<(f64, f64)> = None;
        for &(ib, box_b) in &cb {
            if !overlaps(&box_a, &box_b) {
                continue;
            }
            for i in ia..(ia + CHUNK).min(sa.len() - 1) {
                for j in ib..(ib + CHUNK).min(sb.len() - 1) {
                    if let Some((u, w)) = segment_intersection(sa[i].1, sa[i + 1].1, sb[j].1, sb[j + 1].1) {
                        let s_a = sa[i].0 + u * (sa[i + 1].0 - sa[i].0);
                        let s_b = sb[j].0 + w * (sb[j + 1].0 - sb[j].0);
                        if best.is_none_or(|(bs, _)| s_a < bs) {
                            best = Some((s_a, s_b));
                        }
                    }
                }
            }
        }
        if let Some((s_a, s_b)) = best {
            let (s_a, s_b) = refine(a, b, s_a, s_b);
            return Some(ConflictPoint::at(a, b, s_a, s_b));
        }
    }
    None
}

/// Bisects on the signed offset of path A from path B's tangent line.
fn refine(a: &RoutePath, b: &RoutePath, s_a: f64, s_b: f64) -> (f64, f64) {
    let side = |s: f64| {
        let p = a.position(s);
        let proj = b.project(p[0], p[1]);
        (proj.lateral, proj.s)
    };
    let mut lo = (s_a - SAMPLE_STEP).max(0.0);
    let mut hi = (s_a + SAMPLE_STEP).min(a.total_length());
    let (f_lo, _) = side(lo);
    let (f_hi, _) = side(hi);
    if f_lo.signum() == f_hi.signum() {
        return (s_a, s_b);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (f_mid, _) = side(mid);
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, side(s).1)
}
