use std::collections::BTreeMap;

use orchestra::dsl::{
    boilerplate, lower, parse_scenario, Accessor, AccessorKind, AstExpr, BinOp, BoilerplateConfig, ConstraintKind,
    LowerError, Landmark, Parameter, Ref, ScenarioProgram, Unit,
};
use orchestra::expr::{Expr, Rel};
use orchestra::lane_map::{build_t_intersection, register_conflict, resolve_route, Heading, RoutePath, TIntersectionConfig};
use orchestra::motion::{MotionProfile, PieceKind};

const C1: &str = include_str!("fixtures/lead_actor_turn_into_driveway.txt");
const C2: &str = include_str!("fixtures/right_turn_driveway_hesitate_and_go.txt");

fn acc(actor: usize, kind: AccessorKind, knot: &str) -> AstExpr {
    AstExpr::Access(Accessor { actor, kind, target: Ref::Knot(knot.into()) })
}

fn piece(actor: usize, kind: AccessorKind, name: &str) -> AstExpr {
    AstExpr::Access(Accessor { actor, kind, target: Ref::Piece(name.into()) })
}

fn num(n: i64) -> AstExpr {
    AstExpr::Num(orchestra::expr::Rational::from_integer(n.into()))
}

fn param(name: &str) -> AstExpr {
    AstExpr::Param(name.into())
}

fn sub(a: AstExpr, b: AstExpr) -> AstExpr {
    AstExpr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
}

fn turn() -> AstExpr {
    AstExpr::Landmark(Landmark::Turn)
}

fn rels(p: &ScenarioProgram) -> Vec<(AstExpr, Rel, AstExpr)> {
    p.constraints.iter().map(|c| (c.lhs.clone(), c.rel, c.rhs.clone())).collect()
}

use AccessorKind::{Acceleration as A, Duration as D, Position as X, Velocity as V};

#[test]
fn lead_actor_golden_ast() {
    let p = parse_scenario(C1).unwrap();
    assert_eq!(p.actors.len(), 2);
    assert_eq!(p.actors[0].route, [Heading::W]);
    assert_eq!(p.actors[0].knots, ["t0", "t1", "t2"]);
    assert_eq!(p.actors[0].pieces, [PieceKind::Go, PieceKind::Go]);
    assert_eq!(p.actors[0].piece_names(), ["go_1", "go_2"]);
    assert_eq!(p.actors[1].route, [Heading::W, Heading::N]);
    assert_eq!(p.actors[1].knots, ["t0", "t1", "t2"]);
    assert_eq!(p.actors[1].pieces, [PieceKind::Go, PieceKind::Dec]);
    let expected = vec![
        (acc(0, V, "t0"), Rel::Eq, param("ego_initial_speed_mps")),
        (acc(0, X, "t0"), Rel::Eq, sub(turn(), num(100))),
        (acc(1, V, "t0"), Rel::Eq, param("initial_speed_mps")),
        (sub(acc(1, X, "t1"), acc(0, X, "t1")), Rel::Eq, param("distance_ahead_of_ego_m")),
        (acc(1, X, "t1"), Rel::Eq, turn()),
        (acc(1, V, "t2"), Rel::Eq, num(0)),
        (acc(0, D, "t1"), Rel::Eq, acc(1, D, "t1")),
    ];
    assert_eq!(rels(&p), expected);
    let params: Vec<&str> = p.parameters.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(params, ["ego_initial_speed_mps", "initial_speed_mps", "distance_ahead_of_ego_m"]);
    assert_eq!(p.parameters[2], Parameter { name: "distance_ahead_of_ego_m".into(), unit: Unit::M });
}

#[test]
fn hesitate_and_go_golden_ast() {
    let p = parse_scenario(C2).unwrap();
    assert_eq!(p.actors[0].route, [Heading::S, Heading::W]);
    assert_eq!(p.actors[1].knots, ["t0", "t1", "t2", "t3"]);
    assert_eq!(p.actors[1].pieces, [PieceKind::Dec, PieceKind::Stop, PieceKind::Acc]);
    let expected = vec![
        (acc(0, V, "t0"), Rel::Eq, param("ego_initial_speed_mps")),
        (acc(1, V, "t0"), Rel::Eq, param("initial_speed_mps")),
        (piece(1, A, "dec"), Rel::Eq, param("deceleration_mpss")),
        (acc(1, V, "t1"), Rel::Eq, num(0)),
        (acc(1, X, "t1"), Rel::Eq, sub(turn(), param("distance_to_driveway_m"))),
        (piece(1, V, "stop"), Rel::Eq, num(0)),
        (piece(1, A, "stop"), Rel::Eq, num(0)),
        (acc(0, X, "t1"), Rel::Eq, turn()),
        (acc(0, D, "t1"), Rel::Eq, acc(1, D, "t1")),
        (acc(1, D, "t2"), Rel::Gt, acc(0, D, "t1")),
        (acc(1, V, "t3"), Rel::Eq, param("initial_speed_mps")),
    ];
    assert_eq!(rels(&p), expected);
    assert_eq!(p.parameters.iter().find(|p| p.name == "deceleration_mpss").unwrap().unit, Unit::Mpss);
}

#[test]
fn pretty_print_round_trips() {
    for text in [C1, C2] {
        let p = parse_scenario(text).unwrap();
        let printed = p.to_string();
        assert_eq!(parse_scenario(&printed).unwrap(), p);
        assert_eq!(parse_scenario(&printed).unwrap().to_string(), printed);
    }
}

#[test]
fn parse_errors_carry_locations() {
    let e = parse_scenario("Actor 0:\n- W\n- [t0, go]\n").unwrap_err();
    assert_eq!(e.line, 3);
    let e = parse_scenario("Actor 0:\n- W\n- [t0, go, t1]\nConstraints:\nA0x(t0) == 1\nA0q(t1) == 2\n").unwrap_err();
    assert_eq!(e.line, 6);
    let e = parse_scenario("Actor 0:\n- W\n- [t0, go, t1]\nConstraints:\nA0x(t7) == 1\n").unwrap_err();
    assert_eq!((e.line, e.column), (5, 5));
    let e = parse_scenario("Actor 0:\n- W\n- [t0, go, t1]\nConstraints:\n5 == A0x(t1)\n").unwrap_err();
    assert!(e.message.contains("left-hand side"));
    let e = parse_scenario("Actor 0:\n- W\n- [t0, go, t1]\nConstraints:\nA0x(go) == 1\n").unwrap_err();
    assert!(e.message.contains("velocity or acceleration"));
    let e = parse_scenario("Actor 0:\n- Q\n- [t0, go, t1]\n").unwrap_err();
    assert_eq!((e.line, e.column), (2, 3));
    let e = parse_scenario("hello\n").unwrap_err();
    assert_eq!(e.line, 1);
}

#[test]
fn just_before_forms() {
    let text = "Actor 0:\n- W\n- [t0, go, t1]\nConstraints:\nA0x(t1) == just before stop_line\nA0x(t1) <= just_before(stop_line)\n";
    let p = parse_scenario(text).unwrap();
    let jb = AstExpr::JustBefore(Box::new(AstExpr::Landmark(Landmark::StopLine)));
    assert_eq!(p.constraints[0].rhs, jb);
    assert_eq!(p.constraints[1].rhs, jb);
}

struct Setup {
    profiles: Vec<MotionProfile>,
    paths: Vec<RoutePath>,
}

fn setup(p: &ScenarioProgram) -> Setup {
    let g = build_t_intersection(&TIntersectionConfig::default());
    let profiles = p
        .actors
        .iter()
        .map(|a| MotionProfile::build(a.id, a.knots.clone(), &a.piece_specs()).unwrap())
        .collect();
    let mut paths: Vec<RoutePath> = p.actors.iter().map(|a| resolve_route(&g, &a.route).unwrap()).collect();
    let (first, rest) = paths.split_at_mut(1);
    register_conflict(&mut first[0], &mut rest[0]).unwrap();
    Setup { profiles, paths }
}

fn bindings(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn lead_actor_lowers() {
    let p = parse_scenario(C1).unwrap();
    let s = setup(&p);
    let b = bindings(&[("ego_initial_speed_mps", 10.0), ("initial_speed_mps", 8.0), ("distance_ahead_of_ego_m", 50.0)]);
    let set = lower(&p, &s.profiles, &s.paths, &b).unwrap();
    assert_eq!(set.len(), 7);
    // A0v(t0) reads the first go piece's velocity rate.
    match &set.constraints[0].kind {
        ConstraintKind::Relation { lhs, rel: Rel::Eq, rhs } => {
            assert_eq!(*lhs, Expr::var("a0_go_1_v"));
            assert_eq!(*rhs, Expr::int(10));
        }
        other => panic!("{other:?}"),
    }
    // A1x(t1) == turn: the hero's own lane_turn arclength.
    let lane_turn = s.paths[1].landmark("lane_turn").unwrap();
    match &set.constraints[4].kind {
        ConstraintKind::Relation { rhs, .. } => {
            assert!((rhs.as_const().map(orchestra::expr::rational_to_f64).unwrap() - lane_turn).abs() < 1e-12)
        }
        other => panic!("{other:?}"),
    }
    // A0(t1) == A1(t1): durations of the first pieces.
    match &set.constraints[6].kind {
        ConstraintKind::Relation { lhs, rhs, .. } => {
            assert_eq!(*lhs, Expr::var("a0_go_1_d"));
            assert_eq!(*rhs, Expr::var("a1_go_d"));
        }
        other => panic!("{other:?}"),
    }
    let flags: Vec<(bool, bool)> = set.iter().map(|c| (c.initial_state, c.reactive)).collect();
    assert_eq!(
        flags,
        [(true, false), (true, false), (true, false), (false, true), (false, true), (false, false), (false, false)]
    );
    let known: std::collections::BTreeSet<String> = s.profiles.iter().flat_map(|p| p.variables()).collect();
    assert!(set.vars().is_subset(&known));
}

#[test]
fn hesitate_and_go_lowers() {
    let p = parse_scenario(C2).unwrap();
    let s = setup(&p);
    let b = bindings(&[
        ("ego_initial_speed_mps", 5.0),
        ("initial_speed_mps", 10.0),
        ("deceleration_mpss", -3.0),
        ("distance_to_driveway_m", 10.0),
    ]);
    let set = lower(&p, &s.profiles, &s.paths, &b).unwrap();
    assert_eq!(set.len(), 11);
    let known: std::collections::BTreeSet<String> = s.profiles.iter().flat_map(|p| p.variables()).collect();
    assert!(set.vars().is_subset(&known));
    // A1a(stop) == 0 is trivially true.
    match &set.constraints[6].kind {
        ConstraintKind::Relation { lhs, rhs, .. } => assert!(lhs.is_zero() && rhs.is_zero()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unbound_parameter_is_reported() {
    let p = parse_scenario(C1).unwrap();
    let s = setup(&p);
    let err = lower(&p, &s.profiles, &s.paths, &bindings(&[("ego_initial_speed_mps", 10.0)])).unwrap_err();
    assert!(matches!(err, LowerError::UnboundParameter { ref name, line: 11 } if name == "initial_speed_mps"));
}

#[test]
fn conflict_point_requires_conflict() {
    let text = "Actor 0:\n- W\n- [t0, go, t1]\nActor 1:\n- E\n- [t0, go, t1]\nConstraints:\nA0x(t1) == conflict_point\n";
    let p = parse_scenario(text).unwrap();
    let g = build_t_intersection(&TIntersectionConfig::default());
    let profiles: Vec<MotionProfile> =
        p.actors.iter().map(|a| MotionProfile::build(a.id, a.knots.clone(), &a.piece_specs()).unwrap()).collect();
    let paths: Vec<RoutePath> = p.actors.iter().map(|a| resolve_route(&g, &a.route).unwrap()).collect();
    let err = lower(&p, &profiles, &paths, &BTreeMap::new()).unwrap_err();
    assert!(matches!(err, LowerError::MissingConflict { .. }));
}

#[test]
fn boilerplate_counts() {
    let p = parse_scenario("Actor 0:\n- W\n- [t0, go, t1, dec, t2]\n").unwrap();
    let profile = MotionProfile::build(0, p.actors[0].knots.clone(), &p.actors[0].piece_specs()).unwrap();
    let set = boilerplate(std::slice::from_ref(&profile), &[400.0], &BoilerplateConfig::default());
    assert_eq!(set.len(), 8);
    let labels: Vec<&str> = set.iter().map(|c| c.label.as_str()).collect();
    assert!(labels.contains(&"A0 total duration <= 30"));
    let dec = set.iter().find(|c| c.label.starts_with("A0 dec acceleration")).unwrap();
    match &dec.kind {
        ConstraintKind::Range { exprs, lo, hi } => {
            assert_eq!(exprs[0], Expr::var("a0_dec_a"));
            assert_eq!(*lo, Expr::int(-6));
            assert!(hi.is_zero());
        }
        other => panic!("{other:?}"),
    }
}
