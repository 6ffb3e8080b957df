//! Lane-graph maps, drivable route paths and the Frenet transform.

mod conflict;
mod path;
mod route;
pub mod spline;
mod t_intersection;

pub use conflict::{conflict_point, register_conflict, ConflictPoint};
pub use path::{CartesianState, FrenetState, FromFrenet, Projection, RoutePath};
pub use route::resolve_route;
pub use t_intersection::{build_t_intersection, TIntersectionConfig};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map document is malformed: {0}")]
    Schema(String),
    #[error("segment `{id}` is invalid: {reason}")]
    InvalidSegment { id: String, reason: String },
    #[error("duplicate segment id `{0}`")]
    DuplicateSegment(String),
    #[error("edge {from} -> {to} references unknown segment `{missing}`")]
    DanglingEdge { from: String, to: String, missing: String },
    #[error("edge {from} -> {to} ({relation}) has no inverse {expected} edge")]
    MissingInverse { from: String, to: String, relation: Relation, expected: Relation },
    #[error("no traversal realizes route {0:?}")]
    NoRoute(Vec<Heading>),
    #[error("route {route:?} is ambiguous; candidates: {candidates:?}")]
    AmbiguousRoute { route: Vec<Heading>, candidates: Vec<Vec<String>> },
    #[error("route is empty")]
    EmptyRoute,
    #[error("invalid cardinal direction `{0}`")]
    BadHeading(String),
    #[error("paths do not intersect")]
    NoConflict,
    #[error("point ({x:.3}, {y:.3}) is {distance:.3} m from the path, beyond the projection limit")]
    OffPath { x: f64, y: f64, distance: f64 },
    #[error("arclength {s} outside path [0, {length}]")]
    OutsidePath { s: f64, length: f64 },
}

/// Cardinal direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub fn parse(text: &str) -> Result<Heading, MapError> {
        match text.trim() {
            "N" => Ok(Heading::N),
            "E" => Ok(Heading::E),
            "S" => Ok(Heading::S),
            "W" => Ok(Heading::W),
            other => Err(MapError::BadHeading(other.to_string())),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Heading::N => 'N',
            Heading::E => 'E',
            Heading::S => 'S',
            Heading::W => 'W',
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Road,
    Driveway,
    TurnLeft,
    TurnRight,
    DrivewayExit,
}

impl SegmentKind {
    pub fn is_turn(self) -> bool {
        matches!(self, SegmentKind::TurnLeft | SegmentKind::TurnRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Successor,
    Predecessor,
    LeftNeighbor,
    RightNeighbor,
}

impl Relation {
    fn inverse(self) -> Option<Relation> {
        match self {
            Relation::Successor => Some(Relation::Predecessor),
            Relation::Predecessor => Some(Relation::Successor),
            _ => None,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Successor => "successor",
            Relation::Predecessor => "predecessor",
            Relation::LeftNeighbor => "left_neighbor",
            Relation::RightNeighbor => "right_neighbor",
        };
        f.write_str(s)
    }
}

/// One lane segment; `heading` is the direction of travel (the exit
/// direction for turn segments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSegment {
    pub id: String,
    pub kind: SegmentKind,
    pub heading: Heading,
    pub centerline: Vec<[f64; 2]>,
}

impl LaneSegment {
    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
    }

    fn validate(&self) -> Result<(), MapError> {
        let invalid = |reason: &str| MapError::InvalidSegment { id: self.id.clone(), reason: reason.to_string() };
        if self.centerline.len() < 2 {
            return Err(invalid("centerline needs at least two points"));
        }
        if self.centerline.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("centerline has non-finite coordinates"));
        }
        if self.centerline.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("consecutive centerline points coincide"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
}

/// Validated lane graph. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaneGraph {
    segments: Vec<LaneSegment>,
    edges: Vec<Edge>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneGraphDocument {
    segments: Vec<LaneSegment>,
    edges: Vec<Edge>,
}

impl LaneGraph {
    pub fn new(segments: Vec<LaneSegment>, edges: Vec<Edge>) -> Result<Self, MapError> {
        let mut index = BTreeMap::new();
        for (i, seg) in segments.iter().enumerate() {
            seg.validate()?;
            if index.insert(seg.id.clone(), i).is_some() {
                return Err(MapError::DuplicateSegment(seg.id.clone()));
            }
        }
        for edge in &edges {
            for end in [&edge.from, &edge.to] {
                if !index.contains_key(end) {
                    return Err(MapError::DanglingEdge {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if let Some(expected) = edge.relation.inverse() {
                let has_inverse =
                    edges.iter().any(|e| e.from == edge.to && e.to == edge.from && e.relation == expected);
                if !has_inverse {
                    return Err(MapError::MissingInverse {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        relation: edge.relation,
                        expected,
                    });
                }
            }
        }
        Ok(LaneGraph { segments, edges, index })
    }

    /// Parses and validates a JSON map document.
    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let doc: LaneGraphDocument = serde_json::from_str(text).map_err(|e| MapError::Schema(e.to_string()))?;
        LaneGraph::new(doc.segments, doc.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lane graph serializes")
    }

    pub fn segments(&self) -> &[LaneSegment] {
        &self.segments
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn segment(&self, id: &str) -> Option<&LaneSegment> {
        self.index.get(id).map(|&i| &self.segments[i])
    }

    pub fn related<'a>(&'a self, id: &'a str, relation: Relation) -> impl Iterator<Item = &'a LaneSegment> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.from == id && e.relation == relation)
            .filter_map(|e| self.segment(&e.to))
    }

    pub fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LaneSegment> + 'a {
        self.related(id, Relation::Successor)
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LaneSegment> + 'a {
        self.related(id, Relation::Predecessor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, pts: Vec<[f64; 2]>) -> LaneSegment {
        LaneSegment { id: id.into(), kind: SegmentKind::Road, heading: Heading::E, centerline: pts }
    }

    #[test]
    fn two_segment_document_loads() {
        let doc = r#"{
            "segments": [
                {"id": "a", "kind": "road", "heading": "E", "centerline": [[0,0],[10,0]]},
                {"id": "b", "kind": "road", "heading": "E", "centerline": [[10,0],[20,0]]}
            ],
            "edges": [
                {"from": "a", "to": "b", "relation": "successor"},
                {"from": "b", "to": "a", "relation": "predecessor"}
            ]
        }"#;
        let g = LaneGraph::from_json(doc).unwrap();
        assert_eq!(g.segments().len(), 2);
        assert_eq!(g.successors("a").map(|s| s.id.as_str()).collect::<Vec<_>>(), vec!["b"]);
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let doc = r#"{"segments": [{"id": "a", "kind": "road", "heading": "E", "centerline": [[0,0],[1,0]]}],
                      "edges": [{"from": "a", "to": "zz", "relation": "left_neighbor"}]}"#;
        assert!(matches!(LaneGraph::from_json(doc), Err(MapError::DanglingEdge { missing, .. }) if missing == "zz"));
    }

    #[test]
    fn schema_violation_names_element() {
        let doc = r#"{"segments": [{"id": "a", "kind": "bridge", "heading": "E", "centerline": [[0,0],[1,0]]}], "edges": []}"#;
        match LaneGraph::from_json(doc) {
            Err(MapError::Schema(msg)) => assert!(msg.contains("bridge"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn segment_invariants() {
        assert!(LaneGraph::new(vec![seg("a", vec![[0.0, 0.0]])], vec![]).is_err());
        assert!(LaneGraph::new(vec![seg("a", vec![[0.0, 0.0], [0.0, 0.0]])], vec![]).is_err());
        let dup = vec![seg("a", vec![[0.0, 0.0], [1.0, 0.0]]), seg("a", vec![[1.0, 0.0], [2.0, 0.0]])];
        assert!(matches!(LaneGraph::new(dup, vec![]), Err(MapError::DuplicateSegment(_))));
    }

    #[test]
    fn successor_requires_inverse() {
        let segs = vec![seg("a", vec![[0.0, 0.0], [1.0, 0.0]]), seg("b", vec![[1.0, 0.0], [2.0, 0.0]])];
        let edges = vec![Edge { from: "a".into(), to: "b".into(), relation: Relation::Successor }];
        assert!(matches!(LaneGraph::new(segs, edges), Err(MapError::MissingInverse { .. })));
    }

    #[test]
    fn headings_parse() {
        assert_eq!(Heading::parse("W").unwrap(), Heading::W);
        assert!(Heading::parse("Q").is_err());
    }
}
