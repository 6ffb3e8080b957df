use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Edge, Heading, LaneGraph, LaneSegment, Relation, SegmentKind};

/// Spacing of the points sampled along turn arcs.
const ARC_SPACING: f64 = 0.5;

/// Geometry of the synthetic T-intersection: an East–West two-lane road on
/// `y = 0` and a two-lane driveway leaving it to the North along `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TIntersectionConfig {
    pub lane_width: f64,
    pub road_length: f64,
    pub driveway_length: f64,
    /// Extra clearance between the far lane edge and the intersection box.
    pub corner: f64,
}

impl Default for TIntersectionConfig {
    fn default() -> Self {
        TIntersectionConfig { lane_width: 3.5, road_length: 400.0, driveway_length: 60.0, corner: 1.5 }
    }
}

impl TIntersectionConfig {
    /// Half-width of the square intersection box around the origin.
    pub fn box_half_width(&self) -> f64 {
        self.lane_width + self.corner
    }
}

fn arc(center: [f64; 2], radius: f64, from: f64, to: f64) -> Vec<[f64; 2]> {
    let n = ((radius * (to - from).abs()) / ARC_SPACING).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Builds the T-intersection lane graph. Panics if any length is not positive.
pub fn build_t_intersection(config: &TIntersectionConfig) -> LaneGraph {
    let TIntersectionConfig { lane_width: w, road_length, driveway_length, corner } = *config;
    assert!(w > 0.0 && road_length > 0.0 && driveway_length > 0.0 && corner >= 0.0, "lengths must be positive");
    let b = config.box_half_width();
    let half_road = 0.5 * road_length;
    assert!(half_road > b, "road shorter than the intersection");
    let hw = 0.5 * w;
    let top = b + driveway_length;

    let seg = |id: &str, kind, heading, centerline| LaneSegment { id: id.to_string(), kind, heading, centerline };
    use Heading::*;
    use SegmentKind::*;
    let segments = vec![
        seg("wb_approach", Road, W, vec![[half_road, hw], [b, hw]]),
        seg("wb_through", Road, W, vec![[b, hw], [-b, hw]]),
        seg("wb_depart", Road, W, vec![[-b, hw], [-half_road, hw]]),
        seg("eb_approach", Road, E, vec![[-half_road, -hw], [-b, -hw]]),
        seg("eb_through", Road, E, vec![[-b, -hw], [b, -hw]]),
        seg("eb_depart", Road, E, vec![[b, -hw], [half_road, -hw]]),
        seg("drive_exit", DrivewayExit, S, vec![[-hw, top], [-hw, b]]),
        seg("drive_entry", Driveway, N, vec![[hw, b], [hw, top]]),
        seg("turn_w_n", TurnRight, N, arc([b, b], b - hw, -0.5 * PI, -PI)),
        seg("turn_e_n", TurnLeft, N, arc([-b, b], b + hw, -0.5 * PI, 0.0)),
        seg("turn_s_w", TurnRight, W, arc([-b, b], b - hw, 0.0, -0.5 * PI)),
        seg("turn_s_e", TurnLeft, E, arc([b, b], b + hw, PI, 1.5 * PI)),
    ];

    let mut edges = Vec::new();
    let mut link = |from: &str, to: &str| {
        edges.push(Edge { from: from.into(), to: to.into(), relation: Relation::Successor });
        edges.push(Edge { from: to.into(), to: from.into(), relation: Relation::Predecessor });
    };
    link("wb_approach", "wb_through");
    link("wb_through", "wb_depart");
    link("eb_approach", "eb_through");
    link("eb_through", "eb_depart");
    link("wb_approach", "turn_w_n");
    link("turn_w_n", "drive_entry");
    link("eb_approach", "turn_e_n");
    link("turn_e_n", "drive_entry");
    link("drive_exit", "turn_s_w");
    link("turn_s_w", "wb_depart");
    link("drive_exit", "turn_s_e");
    link("turn_s_e", "eb_depart");
    for (a, b) in [
        ("wb_approach", "eb_depart"),
        ("wb_through", "eb_through"),
        ("wb_depart", "eb_approach"),
        ("drive_exit", "drive_entry"),
    ] {
        edges.push(Edge { from: a.into(), to: b.into(), relation: Relation::LeftNeighbor });
        edges.push(Edge { from: b.into(), to: a.into(), relation: Relation::LeftNeighbor });
    }
    LaneGraph::new(segments, edges).expect("T-intersection graph is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_has_all_lanes() {
        let g = build_t_intersection(&TIntersectionConfig::default());
        for h in [Heading::W, Heading::E, Heading::S, Heading::N] {
            assert!(g.segments().iter().any(|s| s.heading == h && !s.kind.is_turn()));
        }
        assert_eq!(g.segments().iter().filter(|s| s.kind.is_turn()).count(), 4);
    }

    #[test]
    fn lane_offsets() {
        let g = build_t_intersection(&TIntersectionConfig::default());
        for id in ["wb_approach", "wb_through", "wb_depart"] {
            assert!(g.segment(id).unwrap().centerline.iter().all(|p| p[1] == 1.75));
        }
        for id in ["eb_approach", "eb_through", "eb_depart"] {
            assert!(g.segment(id).unwrap().centerline.iter().all(|p| p[1] == -1.75));
        }
    }

    #[test]
    fn turn_arcs_join_their_lanes() {
        let g = build_t_intersection(&TIntersectionConfig::default());
        for e in g.edges().iter().filter(|e| e.relation == Relation::Successor) {
            let a = g.segment(&e.from).unwrap().centerline.last().unwrap();
            let b = g.segment(&e.to).unwrap().centerline[0];
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-9, "{} -> {}", e.from, e.to);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let c = TIntersectionConfig::default();
        assert_eq!(build_t_intersection(&c), build_t_intersection(&c));
    }
}
