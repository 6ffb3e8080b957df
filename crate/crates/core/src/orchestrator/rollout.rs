//! Problem assembly for initialization and rollout solves.

use super::{OrchestrationError, OrchestrationMode, Problem, WorldState};
use crate::dsl::{
    boilerplate, lower_constraint, BoilerplateConfig, ConstraintKind, ConstraintSet, LoweredConstraint, Origin, Ref,
};
use crate::expr::{rational_from_f64, Cond, Expr, Rel};
use crate::lane_map::{CartesianState, RoutePath};
use crate::motion::{ConcreteProfile, MotionProfile, Order, PieceKind, PieceSpec};

/// Name of the first knot of a rebased profile. Not a valid identifier, so
/// it cannot collide with declared knots.
pub const NOW_KNOT: &str = "@now";
/// Knot splitting a hero's `go` piece in progress.
pub const SPLIT_KNOT: &str = "@split";
/// Name suffix of the second half of a split piece.
pub const HOLD_SUFFIX: &str = "@hold";
/// Acceleration magnitude the hero prefers to stay within while adjusting, m/s².
pub const HERO_COMFORT_MPSS: f64 = 2.0;
/// Distance past the end of the turn that turning actors must reach.
pub const ROUTE_COMPLETION_MARGIN_M: f64 = 1.0;
/// Smallest buffer used to weaken reactive constraints, meters.
pub const MIN_BUFFER_M: f64 = 0.5;

/// The solved motion an actor is currently following.
#[derive(Debug, Clone)]
pub struct ActorPlan {
    pub profile: MotionProfile,
    pub concrete: ConcreteProfile,
    /// Absolute time of the profile's first knot.
    pub start: f64,
}

impl ActorPlan {
    /// `[s, v, a]` at absolute time `t`. After the last knot the actor keeps
    /// its final speed with zero acceleration.
    pub fn state(&self, t: f64) -> [f64; 3] {
        let local = (t - self.start).max(0.0);
        let end = self.concrete.end_time();
        if local <= end {
            return self.concrete.state_vector_at(local);
        }
        let [s, v, _] = self.concrete.state_vector_at(end);
        let v = v.max(0.0);
        [s + v * (local - end), v, 0.0]
    }

    /// Index of the piece in progress at absolute time `t`, or `None` once the profile has ended.
    pub fn piece_at(&self, t: f64) -> Option<usize> {
        let local = t - self.start;
        let knots = self.concrete.knot_times();
        (0..self.concrete.pieces.len()).find(|&k| local >= knots[k] && local < knots[k + 1])
    }
}

/// A constraint problem ready for encoding.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub mode: OrchestrationMode,
    /// Profiles being solved for, by ascending actor id.
    pub profiles: Vec<MotionProfile>,
    pub constraints: ConstraintSet,
    /// Soft assertions, most important first.
    pub preferences: Vec<Cond>,
}

fn num(v: f64) -> Expr {
    Expr::Const(rational_from_f64(v))
}

fn route_completion(profile: &MotionProfile, path: &RoutePath) -> Option<LoweredConstraint> {
    let end = path.landmark("turn_end")?;
    let last = profile.pieces.len();
    let mut c = LoweredConstraint::relation(
        format!("A{} completes its turn", profile.actor_id),
        profile.state_at_knot_index(last, Order::Position),
        Rel::Ge,
        num((end + ROUTE_COMPLETION_MARGIN_M).min(path.total_length())),
        Origin::RouteCompletion,
    );
    c.distance_valued = true;
    Some(c)
}

fn lengths(paths: &[RoutePath]) -> Vec<f64> {
    paths.iter().map(RoutePath::total_length).collect()
}

/// Program, boilerplate and route-completion constraints over the declared skeletons.
pub fn assemble_initial(problem: &Problem, mode: OrchestrationMode) -> Result<Assembly, OrchestrationError> {
    if mode == OrchestrationMode::ClosedLoopRollout {
        return Err(OrchestrationError::Mode(mode));
    }
    let mut constraints = ConstraintSet::default();
    for i in 0..problem.program.constraints.len() {
        constraints.push(lower_constraint(&problem.program, i, &problem.profiles, &problem.paths, &problem.bindings)?);
    }
    constraints.extend(boilerplate(&problem.profiles, &lengths(&problem.paths), &problem.limits));
    for p in &problem.profiles {
        if let Some(c) = route_completion(p, &problem.paths[p.actor_id]) {
            constraints.push(c);
        }
    }
    Ok(Assembly { mode, profiles: problem.profiles.clone(), constraints, preferences: Vec::new() })
}

/// The remaining part of `plan` from `now`, with the piece in progress
/// starting at [`NOW_KNOT`]. `lift` chooses the order of each remaining piece.
pub fn rebase(plan: &ActorPlan, now: f64, lift: impl Fn(usize, &PieceSpec) -> Order) -> Option<MotionProfile> {
    let k = plan.piece_at(now)?;
    let mut knots = vec![NOW_KNOT.to_string()];
    knots.extend(plan.profile.knots[k + 1..].iter().cloned());
    let specs: Vec<PieceSpec> = plan.profile.specs()[k..]
        .iter()
        .enumerate()
        .map(|(i, s)| PieceSpec { order: lift(i, s), ..s.clone() })
        .collect();
    Some(MotionProfile::build(plan.profile.actor_id, knots, &specs).expect("suffix of a valid profile"))
}

/// The hero's remaining skeleton from `now`. A `go` piece in progress is
/// lifted to acceleration and split at [`SPLIT_KNOT`] into two pieces, so the
/// hero can slow down and pick up again while it waits for a reactive
/// trigger. Hold pieces from an earlier split are merged back first.
pub fn rebase_hero(plan: &ActorPlan, now: f64) -> Option<MotionProfile> {
    let k = plan.piece_at(now)?;
    let specs = plan.profile.specs();
    let knots = &plan.profile.knots;
    let mut rest: Vec<(PieceSpec, String)> = Vec::new();
    for i in k..specs.len() {
        let end = knots[i + 1].clone();
        match specs[i].name.strip_suffix(HOLD_SUFFIX) {
            Some(base) if rest.is_empty() => rest.push((PieceSpec { name: base.to_string(), ..specs[i].clone() }, end)),
            Some(_) => rest.last_mut().expect("hold piece follows its origin").1 = end,
            None => rest.push((specs[i].clone(), end)),
        }
    }
    if rest[0].0.kind == PieceKind::Go {
        let (first, end) = rest[0].clone();
        let hold = PieceSpec { name: format!("{}{HOLD_SUFFIX}", first.name), kind: first.kind, order: Order::Acceleration };
        rest[0] = (PieceSpec { order: Order::Acceleration, ..first }, SPLIT_KNOT.to_string());
        rest.insert(1, (hold, end));
    }
    let mut names = vec![NOW_KNOT.to_string()];
    names.extend(rest.iter().map(|(_, end)| end.clone()));
    let specs: Vec<PieceSpec> = rest.into_iter().map(|(s, _)| s).collect();
    Some(MotionProfile::build(plan.profile.actor_id, names, &specs).expect("rearranged suffix of a valid profile"))
}

/// Whether every accessor of program constraint `index` still refers to a
/// knot or piece of an active profile.
fn still_live(problem: &Problem, index: usize, profiles: &[MotionProfile]) -> bool {
    problem.program.constraints[index].accessors().iter().all(|a| {
        let Some(p) = profiles.iter().find(|p| p.actor_id == a.actor) else { return false };
        match &a.target {
            Ref::Knot(k) => p.knot_index(k).is_ok(),
            Ref::Piece(name) => p.piece_index(name).is_ok(),
        }
    })
}

/// Weakens a relation by `buffer` on either side.
fn weaken(c: LoweredConstraint, buffer: f64) -> LoweredConstraint {
    let ConstraintKind::Relation { lhs, rel, rhs } = c.kind.clone() else { return c };
    let b = num(buffer);
    let kind = match rel {
        Rel::Eq => ConstraintKind::Range { exprs: vec![lhs.sub(rhs)], lo: b.clone().neg(), hi: b },
        Rel::Lt | Rel::Le => ConstraintKind::Relation { lhs, rel, rhs: rhs.add(b) },
        Rel::Gt | Rel::Ge => ConstraintKind::Relation { lhs, rel, rhs: rhs.sub(b) },
    };
    LoweredConstraint { kind, label: format!("{} (buffer {buffer})", c.label), ..c }
}

fn pin(label: String, expr: Expr, value: f64) -> LoweredConstraint {
    let v = num(value);
    LoweredConstraint::new(label, ConstraintKind::Range { exprs: vec![expr], lo: v.clone(), hi: v }, Origin::Pin)
}

fn observed(world: &WorldState, id: usize) -> CartesianState {
    let a = &world.actors[id];
    CartesianState { x: a.x, y: a.y, theta: a.theta, v: a.v, a: a.a }
}

/// Re-assembles the problem at `world.time` from the actors' current plans.
///
/// Initial-state constraints give way to exact pins of every actor's observed
/// Frenet state. The ego's remaining pieces are lifted one order and its
/// velocity kept non-negative; a hero `go` piece in progress is lifted to
/// acceleration so the hero can still adjust its timing. Reactive constraints
/// are weakened by `world.value` on either side. Constraints that refer to
/// knots or pieces already passed are dropped.
pub fn assemble_rollout(problem: &Problem, plans: &[ActorPlan], world: &WorldState) -> Result<Assembly, OrchestrationError> {
    let now = world.time;
    let ego = problem.ego;
    let mut profiles = Vec::new();
    let mut constraints = ConstraintSet::default();
    let mut preferences = Vec::new();
    let mut hero_cruise = Vec::new();
    let mut hero_lifted = Vec::new();
    let mut ego_hold = None;
    for (id, plan) in plans.iter().enumerate() {
        let rebased = if id == ego {
            rebase(plan, now, |_, s| s.order.lifted())
        } else {
            rebase_hero(plan, now)
        };
        let Some(profile) = rebased else { continue };
        let path = &problem.paths[id];
        let frenet = path
            .to_frenet(&observed(world, id))
            .map_err(|source| OrchestrationError::OffPath { actor: id, time: now, source })?;
        constraints.push(pin(format!("A{id} position pinned"), profile.state_at_knot_index(0, Order::Position), frenet.s));
        if profile.pieces[0].order >= Order::Velocity {
            let v = if id == ego { frenet.s_dot.max(0.0) } else { frenet.s_dot };
            constraints.push(pin(format!("A{id} velocity pinned"), profile.state_at_knot_index(0, Order::Velocity), v));
        }
        if id == ego {
            for j in 0..=profile.pieces.len() {
                constraints.push(LoweredConstraint::relation(
                    format!("A{id} does not reverse at knot {j}"),
                    profile.state_at_knot_index(j, Order::Velocity),
                    Rel::Ge,
                    Expr::zero(),
                    Origin::NoReverse,
                ));
            }
            let holds: Vec<Cond> = (0..profile.pieces.len())
                .filter(|&k| profile.pieces[k].order == Order::Acceleration)
                .map(|k| Cond::cmp(Rel::Eq, profile.piece_rate(k, Order::Acceleration), Expr::zero()))
                .collect();
            if !holds.is_empty() {
                ego_hold = Some(Cond::and(holds));
            }
        } else {
            if profile.knots.get(1).is_some_and(|k| k == SPLIT_KNOT) {
                for k in 0..2 {
                    let a = profile.piece_rate(k, Order::Acceleration);
                    hero_cruise.push(Cond::cmp(Rel::Eq, a.clone(), Expr::zero()));
                    hero_lifted.push(Cond::cmp(Rel::Ge, a.clone(), num(-HERO_COMFORT_MPSS)));
                    hero_lifted.push(Cond::cmp(Rel::Le, a, num(HERO_COMFORT_MPSS)));
                }
            }
            if let Some(c) = route_completion(&profile, path) {
                constraints.push(c);
            }
        }
        profiles.push(profile);
    }

    // Reactive constraints are hard only up to the buffer; their exact form
    // is preferred right after the ego's steady-motion assumption.
    let buffer = world.value.max(MIN_BUFFER_M);
    let mut exact = Vec::new();
    for i in 0..problem.program.constraints.len() {
        if !still_live(problem, i, &profiles) {
            continue;
        }
        let c = lower_constraint(&problem.program, i, &profiles, &problem.paths, &problem.bindings)?;
        if !c.reactive {
            constraints.push(c);
            continue;
        }
        if let ConstraintKind::Relation { lhs, rel, rhs } = &c.kind {
            exact.push(Cond::cmp(*rel, lhs.clone(), rhs.clone()));
        }
        constraints.push(weaken(c, buffer));
    }
    preferences.extend(ego_hold);
    if !exact.is_empty() {
        preferences.push(Cond::and(exact));
    }
    if !hero_cruise.is_empty() {
        preferences.push(Cond::and(hero_cruise));
    }
    if !hero_lifted.is_empty() {
        preferences.push(Cond::and(hero_lifted));
    }
    let limits = BoilerplateConfig { horizon: (problem.limits.horizon - now).max(0.0), ..problem.limits };
    constraints.extend(boilerplate(&profiles, &lengths(&problem.paths), &limits));
    Ok(Assembly { mode: OrchestrationMode::ClosedLoopRollout, profiles, constraints, preferences })
}
