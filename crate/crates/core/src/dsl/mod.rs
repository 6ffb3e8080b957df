//! Scenario pseudocode: actor declarations, trajectory skeletons and
//! relational constraints, plus their lowering onto motion profiles.
//!
//! The grammar is documented in `docs/scenario-grammar.md`.

mod lower;
mod parse;
mod print;

pub use lower::{
    boilerplate, lower, lower_constraint, BoilerplateConfig, ConstraintKind, ConstraintSet, LowerError,
    LoweredConstraint, Origin, JUST_BEFORE_M,
};
pub use parse::{parse_scenario, ParseError};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{Rational, Rel};
use crate::lane_map::{Heading, RoutePath};
use crate::motion::{PieceKind, PieceSpec};

/// Unit suffix of a scenario parameter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    M,
    S,
    Mps,
    Mpss,
}

impl Unit {
    /// Unit implied by an identifier's suffix, longest suffix first.
    pub fn from_name(name: &str) -> Option<Unit> {
        [("_mpss", Unit::Mpss), ("_mps", Unit::Mps), ("_m", Unit::M), ("_s", Unit::S)]
            .into_iter()
            .find(|(suffix, _)| name.len() > suffix.len() && name.ends_with(suffix))
            .map(|(_, unit)| unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub unit: Unit,
}

/// One declared actor: id, route and trajectory skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorDecl {
    pub id: usize,
    pub route: Vec<Heading>,
    pub knots: Vec<String>,
    /// Piece base names as written, one per gap between knots.
    pub pieces: Vec<PieceKind>,
}

impl ActorDecl {
    /// Piece names unique within the actor: the base name when it occurs
    /// once, otherwise the base name with a 1-based occurrence suffix.
    pub fn piece_names(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeMap::<PieceKind, usize>::new();
        self.pieces
            .iter()
            .map(|kind| {
                let total = self.pieces.iter().filter(|k| *k == kind).count();
                let n = seen.entry(*kind).or_insert(0);
                *n += 1;
                if total == 1 {
                    kind.base_name().to_string()
                } else {
                    format!("{}_{}", kind.base_name(), n)
                }
            })
            .collect()
    }

    pub fn piece_specs(&self) -> Vec<PieceSpec> {
        self.piece_names()
            .into_iter()
            .zip(&self.pieces)
            .map(|(name, &kind)| PieceSpec { name, kind, order: kind.default_order() })
            .collect()
    }
}

/// Named location on an actor's path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Landmark {
    StopLine,
    ConflictPoint,
    TurnStart,
    TurnEnd,
    /// `lane_turn` when a conflict exists, else `turn_start`.
    Turn,
    LaneStart,
}

impl Landmark {
    pub const ALL: [Landmark; 6] = [
        Landmark::StopLine,
        Landmark::ConflictPoint,
        Landmark::TurnStart,
        Landmark::TurnEnd,
        Landmark::Turn,
        Landmark::LaneStart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::StopLine => "stop_line",
            Landmark::ConflictPoint => "conflict_point",
            Landmark::TurnStart => "turn_start",
            Landmark::TurnEnd => "turn_end",
            Landmark::Turn => "turn",
            Landmark::LaneStart => "lane_start",
        }
    }

    pub fn parse(text: &str) -> Option<Landmark> {
        Landmark::ALL.into_iter().find(|l| l.name() == text)
    }

    /// Arclength of the landmark on `path`, if the path has it.
    pub fn locate(self, path: &RoutePath) -> Option<f64> {
        match self {
            Landmark::StopLine => path.landmark("stop_line"),
            Landmark::TurnStart => path.landmark("turn_start"),
            Landmark::TurnEnd => path.landmark("turn_end"),
            Landmark::LaneStart => Some(path.landmark("lane_start").unwrap_or(0.0)),
            Landmark::ConflictPoint => path.landmark("lane_turn"),
            Landmark::Turn => path.landmark("lane_turn").or_else(|| path.landmark("turn_start")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessorKind {
    Position,
    Velocity,
    Acceleration,
    /// Elapsed time from the first knot.
    Duration,
}

impl AccessorKind {
    pub fn letter(self) -> &'static str {
        match self {
            AccessorKind::Position => "x",
            AccessorKind::Velocity => "v",
            AccessorKind::Acceleration => "a",
            AccessorKind::Duration => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ref {
    Knot(String),
    /// A piece, by unique or unambiguous base name.
    Piece(String),
}

impl Ref {
    pub fn name(&self) -> &str {
        match self {
            Ref::Knot(n) | Ref::Piece(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Accessor {
    pub actor: usize,
    pub kind: AccessorKind,
    pub target: Ref,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AstExpr {
    Num(Rational),
    Param(String),
    Landmark(Landmark),
    Access(Accessor),
    Neg(Box<AstExpr>),
    Bin(BinOp, Box<AstExpr>, Box<AstExpr>),
    /// `just before L`: the location five meters short of `L`.
    JustBefore(Box<AstExpr>),
}

impl AstExpr {
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a AstExpr)) {
        f(self);
        match self {
            AstExpr::Neg(e) | AstExpr::JustBefore(e) => e.visit(f),
            AstExpr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn accessors(&self) -> Vec<&Accessor> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let AstExpr::Access(a) = e {
                out.push(a);
            }
        });
        out
    }

    pub fn has_landmark(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, AstExpr::Landmark(_) | AstExpr::JustBefore(_)));
        found
    }
}

/// One relational constraint; `line` is the 1-based source line (ignored by equality).
#[derive(Debug, Clone)]
pub struct ConstraintAst {
    pub lhs: AstExpr,
    pub rel: Rel,
    pub rhs: AstExpr,
    pub line: usize,
}

impl PartialEq for ConstraintAst {
    fn eq(&self, other: &Self) -> bool {
        self.lhs == other.lhs && self.rel == other.rel && self.rhs == other.rhs
    }
}

impl ConstraintAst {
    /// Accessors on both sides, left to right.
    pub fn accessors(&self) -> Vec<&Accessor> {
        let mut out = self.lhs.accessors();
        out.extend(self.rhs.accessors());
        out
    }
}

/// A parsed scenario program.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProgram {
    pub actors: Vec<ActorDecl>,
    pub constraints: Vec<ConstraintAst>,
    /// Parameters in order of first use.
    pub parameters: Vec<Parameter>,
}

impl ScenarioProgram {
    pub fn actor(&self, id: usize) -> Option<&ActorDecl> {
        self.actors.iter().find(|a| a.id == id)
    }
}

impl fmt::Display for ScenarioProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::program(self))
    }
}

impl fmt::Display for ConstraintAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::constraint(self))
    }
}

impl fmt::Display for AstExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::expr(self))
    }
}
