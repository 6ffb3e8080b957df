use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Accessor, AccessorKind, AstExpr, BinOp, ConstraintAst, Landmark, Ref, ScenarioProgram};
use crate::expr::{rational_from_f64, Expr, Rel};
use crate::lane_map::RoutePath;
use crate::motion::{MotionProfile, Order, PieceKind, ProfileError};

/// Offset applied by `just before`.
pub const JUST_BEFORE_M: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowerError {
    #[error("line {line}: parameter `{name}` has no value")]
    UnboundParameter { name: String, line: usize },
    #[error("line {line}: landmark `{landmark}` does not exist on the path of actor {actor}")]
    MissingLandmark { landmark: &'static str, actor: usize, line: usize },
    #[error("line {line}: `{landmark}` needs a conflict point, but the paths of the actors do not meet")]
    MissingConflict { landmark: &'static str, line: usize },
    #[error("line {line}: actor {actor} has no profile or path")]
    UnknownActor { actor: usize, line: usize },
    #[error("line {line}: {source}")]
    Profile { line: usize, source: ProfileError },
}

impl LowerError {
    /// Program line the error refers to.
    pub fn line(&self) -> usize {
        match self {
            LowerError::UnboundParameter { line, .. }
            | LowerError::MissingLandmark { line, .. }
            | LowerError::MissingConflict { line, .. }
            | LowerError::UnknownActor { line, .. }
            | LowerError::Profile { line, .. } => *line,
        }
    }

    /// The same error located at `line`.
    pub fn at_line(mut self, new: usize) -> Self {
        match &mut self {
            LowerError::UnboundParameter { line, .. }
            | LowerError::MissingLandmark { line, .. }
            | LowerError::MissingConflict { line, .. }
            | LowerError::UnknownActor { line, .. }
            | LowerError::Profile { line, .. } => *line = new,
        }
        self
    }
}

/// Shape of a lowered constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Relation { lhs: Expr, rel: Rel, rhs: Expr },
    /// Every expression lies in `[lo, hi]`.
    Range { exprs: Vec<Expr>, lo: Expr, hi: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Index into the program's constraint list.
    Program(usize),
    Boilerplate,
    /// Observed state fixed at a replan.
    Pin,
    /// Route completion for actors with a turn.
    RouteCompletion,
    NoReverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoweredConstraint {
    pub label: String,
    pub kind: ConstraintKind,
    pub origin: Origin,
    /// Sets an actor's position, velocity or acceleration at its first knot.
    pub initial_state: bool,
    /// Left-hand side reads a position at an intermediate knot.
    pub reactive: bool,
    /// Involves positions or landmarks, so equality slack is in meters.
    pub distance_valued: bool,
}

impl LoweredConstraint {
    pub fn new(label: impl Into<String>, kind: ConstraintKind, origin: Origin) -> Self {
        LoweredConstraint {
            label: label.into(),
            kind,
            origin,
            initial_state: false,
            reactive: false,
            distance_valued: false,
        }
    }

    pub fn relation(label: impl Into<String>, lhs: Expr, rel: Rel, rhs: Expr, origin: Origin) -> Self {
        Self::new(label, ConstraintKind::Relation { lhs, rel, rhs }, origin)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            ConstraintKind::Relation { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            ConstraintKind::Range { exprs, lo, hi } => {
                for e in exprs {
                    e.collect_vars(out);
                }
                lo.collect_vars(out);
                hi.collect_vars(out);
            }
        }
    }
}

/// Ordered list of lowered constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSet {
    pub constraints: Vec<LoweredConstraint>,
}

impl ConstraintSet {
    pub fn push(&mut self, c: LoweredConstraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, other: ConstraintSet) {
        self.constraints.extend(other.constraints);
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoweredConstraint> {
        self.constraints.iter()
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.constraints {
            c.collect_vars(&mut out);
        }
        out
    }
}

fn state_order(kind: AccessorKind) -> Option<Order> {
    match kind {
        AccessorKind::Position => Some(Order::Position),
        AccessorKind::Velocity => Some(Order::Velocity),
        AccessorKind::Acceleration => Some(Order::Acceleration),
        AccessorKind::Duration => None,
    }
}

/// Whether `c` fixes an initial state: its left-hand side is a single state
/// accessor at the actor's first declared knot.
pub(crate) fn is_initial_state(program: &ScenarioProgram, c: &ConstraintAst) -> bool {
    match &c.lhs {
        AstExpr::Access(Accessor { actor, kind, target: Ref::Knot(k) }) if *kind != AccessorKind::Duration => {
            program.actor(*actor).is_some_and(|a| a.knots.first() == Some(k))
        }
        _ => false,
    }
}

/// Whether the left-hand side reads a position at a knot that is neither the
/// first nor the last of its actor.
pub(crate) fn is_reactive(program: &ScenarioProgram, c: &ConstraintAst) -> bool {
    c.lhs.accessors().iter().any(|a| match (&a.kind, &a.target) {
        (AccessorKind::Position, Ref::Knot(k)) => program.actor(a.actor).is_some_and(|d| {
            let j = d.knots.iter().position(|n| n == k).unwrap_or(0);
            j > 0 && j + 1 < d.knots.len()
        }),
        _ => false,
    })
}

struct Ctx<'a> {
    profiles: &'a [MotionProfile],
    paths: &'a [RoutePath],
    bindings: &'a BTreeMap<String, f64>,
    line: usize,
    landmark_actor: usize,
}

impl Ctx<'_> {
    fn profile(&self, actor: usize) -> Result<&MotionProfile, LowerError> {
        self.profiles.iter().find(|p| p.actor_id == actor).ok_or(LowerError::UnknownActor { actor, line: self.line })
    }

    fn path(&self, actor: usize) -> Result<&RoutePath, LowerError> {
        self.paths.get(actor).ok_or(LowerError::UnknownActor { actor, line: self.line })
    }

    fn landmark(&self, landmark: Landmark) -> Result<Expr, LowerError> {
        let actor = self.landmark_actor;
        let path = self.path(actor)?;
        let missing = || LowerError::MissingLandmark { landmark: landmark.name(), actor, line: self.line };
        let value = match landmark {
            Landmark::StopLine => path.landmark("stop_line").ok_or_else(missing)?,
            Landmark::TurnStart => path.landmark("turn_start").ok_or_else(missing)?,
            Landmark::TurnEnd => path.landmark("turn_end").ok_or_else(missing)?,
            Landmark::LaneStart => path.landmark("lane_start").unwrap_or(0.0),
            Landmark::ConflictPoint => path
                .landmark("lane_turn")
                .ok_or(LowerError::MissingConflict { landmark: landmark.name(), line: self.line })?,
            Landmark::Turn => match path.landmark("lane_turn").or_else(|| path.landmark("turn_start")) {
                Some(v) => v,
                None => return Err(missing()),
            },
        };
        Ok(Expr::Const(rational_from_f64(value)))
    }

    fn accessor(&self, a: &Accessor) -> Result<Expr, LowerError> {
        let profile = self.profile(a.actor)?;
        let wrap = |source| LowerError::Profile { line: self.line, source };
        match (&a.target, state_order(a.kind)) {
            (Ref::Knot(k), Some(order)) => profile.state_at_knot(k, order).map_err(wrap),
            (Ref::Knot(k), None) => profile.duration_to_knot(k).map_err(wrap),
            (Ref::Piece(p), Some(order)) => Ok(profile.piece_rate(profile.piece_index(p).map_err(wrap)?, order)),
            (Ref::Piece(p), None) => Err(wrap(ProfileError::UnknownKnot(p.clone()))),
        }
    }

    fn expr(&self, e: &AstExpr) -> Result<Expr, LowerError> {
        Ok(match e {
            AstExpr::Num(v) => Expr::Const(v.clone()),
            AstExpr::Param(name) => match self.bindings.get(name) {
                Some(v) => Expr::Const(rational_from_f64(*v)),
                None => return Err(LowerError::UnboundParameter { name: name.clone(), line: self.line }),
            },
            AstExpr::Landmark(l) => self.landmark(*l)?,
            AstExpr::Access(a) => self.accessor(a)?,
            AstExpr::Neg(inner) => self.expr(inner)?.neg(),
            AstExpr::JustBefore(inner) => self.expr(inner)?.sub(Expr::num(JUST_BEFORE_M)),
            AstExpr::Bin(op, a, b) => {
                let (a, b) = (self.expr(a)?, self.expr(b)?);
                match op {
                    BinOp::Add => a.add(b),
                    BinOp::Sub => a.sub(b),
                    BinOp::Mul => a.mul(b),
                }
            }
        })
    }
}

/// Lowers the constraint at `index` of `program` onto the given profiles.
/// `profiles` holds one profile per actor (matched by `actor_id`); `paths` is
/// indexed by actor id.
pub fn lower_constraint(
    program: &ScenarioProgram,
    index: usize,
    profiles: &[MotionProfile],
    paths: &[RoutePath],
    bindings: &BTreeMap<String, f64>,
) -> Result<LoweredConstraint, LowerError> {
    let c = &program.constraints[index];
    let accessors = c.accessors();
    let ctx = Ctx { profiles, paths, bindings, line: c.line, landmark_actor: accessors[0].actor };
    let lhs = ctx.expr(&c.lhs)?;
    let rhs = ctx.expr(&c.rhs)?;
    let distance_valued = c.lhs.has_landmark()
        || c.rhs.has_landmark()
        || accessors.iter().any(|a| a.kind == AccessorKind::Position);
    Ok(LoweredConstraint {
        label: c.to_string(),
        kind: ConstraintKind::Relation { lhs, rel: c.rel, rhs },
        origin: Origin::Program(index),
        initial_state: is_initial_state(program, c),
        reactive: is_reactive(program, c),
        distance_valued,
    })
}

/// Lowers every constraint of `program`.
pub fn lower(
    program: &ScenarioProgram,
    profiles: &[MotionProfile],
    paths: &[RoutePath],
    bindings: &BTreeMap<String, f64>,
) -> Result<ConstraintSet, LowerError> {
    let mut set = ConstraintSet::default();
    for i in 0..program.constraints.len() {
        set.push(lower_constraint(program, i, profiles, paths, bindings)?);
    }
    Ok(set)
}

/// Kinematic limits and scenario length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoilerplateConfig {
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub horizon: f64,
}

impl Default for BoilerplateConfig {
    fn default() -> Self {
        BoilerplateConfig { v_max: 20.0, a_min: -6.0, a_max: 4.0, horizon: 30.0 }
    }
}

/// Per-piece velocity, acceleration and duration bounds plus per-actor
/// horizon and initial-position bounds. `path_lengths` is indexed by actor id.
pub fn boilerplate(profiles: &[MotionProfile], path_lengths: &[f64], config: &BoilerplateConfig) -> ConstraintSet {
    let num = |v: f64| Expr::Const(rational_from_f64(v));
    let mut set = ConstraintSet::default();
    let push = |set: &mut ConstraintSet, label: String, kind| {
        set.push(LoweredConstraint::new(label, kind, Origin::Boilerplate));
    };
    for profile in profiles {
        let id = profile.actor_id;
        for (k, piece) in profile.pieces.iter().enumerate() {
            let start = profile.piece_rate(k, Order::Velocity);
            let end = profile.state_at_knot_index(k + 1, Order::Velocity);
            let mut exprs = vec![start];
            if end != exprs[0] {
                exprs.push(end);
            }
            push(
                &mut set,
                format!("A{id} {} velocity in [0, {}]", piece.name, config.v_max),
                ConstraintKind::Range { exprs, lo: Expr::zero(), hi: num(config.v_max) },
            );
            let (lo, hi) = if piece.order < Order::Acceleration {
                (config.a_min, config.a_max)
            } else {
                match piece.kind {
                    PieceKind::Dec => (config.a_min, 0.0),
                    PieceKind::Acc => (0.0, config.a_max),
                    _ => (config.a_min, config.a_max),
                }
            };
            push(
                &mut set,
                format!("A{id} {} acceleration in [{lo}, {hi}]", piece.name),
                ConstraintKind::Range { exprs: vec![profile.piece_rate(k, Order::Acceleration)], lo: num(lo), hi: num(hi) },
            );
            push(
                &mut set,
                format!("A{id} {} duration >= 0", piece.name),
                ConstraintKind::Relation { lhs: piece.duration.clone(), rel: Rel::Ge, rhs: Expr::zero() },
            );
        }
        push(
            &mut set,
            format!("A{id} total duration <= {}", config.horizon),
            ConstraintKind::Relation { lhs: profile.total_duration(), rel: Rel::Le, rhs: num(config.horizon) },
        );
        if let Some(&length) = path_lengths.get(id) {
            push(
                &mut set,
                format!("A{id} initial position on path"),
                ConstraintKind::Range { exprs: vec![profile.initial_position.clone()], lo: Expr::zero(), hi: num(length) },
            );
        }
    }
    set
}
