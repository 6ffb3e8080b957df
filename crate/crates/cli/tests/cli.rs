use std::path::{Path, PathBuf};
use std::process::Command;

use orchestra::eval::{Interaction, LevelResult, SuccessReport, Tolerance, TriggerResult, TriggerUnit};
use orchestra_cli::document::{read_trace, write_trace, DocumentError, Header};
use orchestra_cli::grid::{classify, CellRun, GridOptions};
use orchestra_cli::{cmd_compare_modes, cmd_grid, cmd_run, cmd_validate, CellStatus, Exit, Mode, Settings};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn settings(name: &str, out: &Path) -> Settings {
    let mut s = Settings::new(scenario(name));
    s.out = out.to_path_buf();
    s
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const MINIMAL: &str = r#"
id = "minimal"
actors = """
Actor 0:
- W
- [t0, go, t1]
Actor 1:
- W, N
- [t0, go, t1, dec, t2]
"""
constraints = """
A0v(t0) == 10
A1v(t0) == 8
A1x(t1) == turn
A1v(t2) == 0
A1x(t0) == A0x(t0) + gap_m
"""
[parameters]
gap_m = 40.0
"#;

#[test]
fn open_loop_run_writes_artifacts_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.mode = Mode::OpenLoop;
    let out = cmd_run(&s).unwrap();
    assert_eq!(out.exit, Exit::Ok, "{:?}", out.lines);
    for suffix in [".trace.jsonl", ".svg", ".report.json"] {
        let p = dir.path().join(format!("lead_actor_turn_into_driveway{suffix}"));
        assert!(p.is_file(), "{}", p.display());
    }
    let svg = std::fs::read_to_string(dir.path().join("lead_actor_turn_into_driveway.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lead_actor_turn_into_driveway.report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn trace_documents_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings("right_turn_driveway_hesitate_and_go", dir.path());
    cmd_run(&s).unwrap();
    let text = std::fs::read_to_string(dir.path().join("right_turn_driveway_hesitate_and_go.trace.jsonl")).unwrap();
    let (header, trace) = read_trace(&text).unwrap();
    assert_eq!(header.scenario_id, "right_turn_driveway_hesitate_and_go");
    assert_eq!(trace.frames.len(), 201);
    assert_eq!(trace.replans.len(), 21);
    assert_eq!(trace.replans[0].plans.len(), 2);
    // Rewriting the loaded trace reproduces the document byte for byte.
    assert_eq!(write_trace(&header, &trace), text);
    let (_, again) = read_trace(&write_trace(&header, &trace)).unwrap();
    for (a, b) in trace.frames.iter().zip(&again.frames) {
        for (x, y) in a.actors.iter().zip(&b.actors) {
            for (p, q) in [(x.x, y.x), (x.y, y.y), (x.theta, y.theta), (x.v, y.v), (x.a, y.a), (x.s, y.s)] {
                assert!((p - q).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn documents_need_a_leading_header() {
    let frame = r#"{"record":"frame","time":0.0,"actors":[],"value":0.5}"#;
    assert!(matches!(read_trace(frame), Err(DocumentError::MissingHeader)));
    assert!(matches!(read_trace(""), Err(DocumentError::Empty)));
    assert!(matches!(read_trace("{not json"), Err(DocumentError::Json { line: 1, .. })));
}

#[test]
fn identical_runs_produce_identical_documents() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut s = settings("driveway_car_stops_at_line", d.path());
        s.seed = 11;
        cmd_run(&s).unwrap();
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("driveway_car_stops_at_line.trace.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn config_hash_tracks_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let header = |s: &Settings| {
        cmd_run(s).unwrap();
        let text = std::fs::read_to_string(dir.path().join("lead_actor_turn_into_driveway.trace.jsonl")).unwrap();
        read_trace(&text).unwrap().0
    };
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.mode = Mode::OpenLoop;
    let h1: Header = header(&s);
    s.set.insert("distance_ahead_of_ego_m".into(), 45.0);
    let h2 = header(&s);
    assert_ne!(h1.config_hash, h2.config_hash);
    assert_eq!(h2.parameters["distance_ahead_of_ego_m"], 45.0);
}

#[test]
fn malformed_scenario_is_a_parse_error_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MINIMAL.replace("A1v(t2) == 0", "A1v(t2) === 0");
    let path = write(dir.path(), "bad.toml", &bad);
    let err = cmd_validate(&Settings::new(&path)).unwrap_err();
    assert_eq!(err.exit, Exit::Parse);
    let line = bad.lines().position(|l| l.contains("===")).unwrap() + 1;
    assert!(err.message.contains(&format!("line {line}")), "{}", err.message);
}

#[test]
fn lowering_and_io_failures_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unbound = MINIMAL.replace("gap_m = 40.0", "");
    let path = write(dir.path(), "unbound.toml", &unbound);
    assert_eq!(cmd_validate(&Settings::new(&path)).unwrap_err().exit, Exit::Lowering);
    assert_eq!(cmd_validate(&Settings::new(dir.path().join("missing.toml"))).unwrap_err().exit, Exit::Io);
    let ok = write(dir.path(), "ok.toml", MINIMAL);
    assert_eq!(cmd_validate(&Settings::new(&ok)).unwrap().exit, Exit::Ok);
}

#[test]
fn infeasible_parameters_are_a_solve_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.set.insert("distance_ahead_of_ego_m".into(), 500.0);
    let err = cmd_run(&s).unwrap_err();
    assert_eq!(err.exit, Exit::Solve);
    assert!(err.message.contains("tolerance 5"), "{}", err.message);
}

#[test]
fn bad_run_settings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for tweak in [
        (|s: &mut Settings| s.dt = Some(0.0)) as fn(&mut Settings),
        |s| s.horizon = Some(-1.0),
        |s| s.ladder = Some(vec![0.5, 0.25]),
    ] {
        let mut s = settings("lead_actor_turn_into_driveway", dir.path());
        tweak(&mut s);
        assert_eq!(cmd_run(&s).unwrap_err().exit, Exit::Parse);
    }
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_orchestra");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let ok = run(&["validate", scenario("lead_actor_turn_into_driveway").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = write(dir.path(), "bad.toml", "id = ");
    let parse = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(2));
    let out = dir.path().to_str().unwrap();
    let infeasible =
        run(&["run", scenario("lead_actor_turn_into_driveway").to_str().unwrap(), "--set", "distance_ahead_of_ego_m=500", "--out", out]);
    assert_eq!(infeasible.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("no solution up to tolerance"));
}

#[test]
fn grid_runs_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings("driveway_car_stops_at_line", dir.path());
    let options = GridOptions {
        axes: vec![("braking_distance_m".into(), vec![10.0, 15.0, 20.0]), ("hero_initial_speed_mps".into(), vec![5.0, 6.0, 7.0])],
        ..GridOptions::default()
    };
    let (outcome, doc) = cmd_grid(&s, &options).unwrap();
    assert_eq!(doc.cells.len(), 9);
    assert_eq!(doc.summary.cells, 9);
    assert!(dir.path().join("driveway_car_stops_at_line.grid.json").is_file());
    assert_eq!(outcome.lines[0], "rows: braking_distance_m, columns: hero_initial_speed_mps");
    assert_eq!(outcome.lines.len(), 2 + 3 + 2);
}

#[test]
fn empty_grid_is_one_nominal_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings("driveway_car_stops_at_line", dir.path());
    let (_, doc) = cmd_grid(&s, &GridOptions::default()).unwrap();
    assert_eq!(doc.cells.len(), 1);
    assert!(doc.cells[0].parameters.is_empty());
    assert_eq!(doc.cells[0].status, CellStatus::Pass);
}

#[test]
fn grid_sampling_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.mode = Mode::OpenLoop;
    let options = GridOptions {
        axes: vec![("distance_ahead_of_ego_m".into(), vec![30.0, 40.0, 50.0, 60.0, 500.0])],
        sample: Some(2),
        ..GridOptions::default()
    };
    let pick = |seed| {
        let mut s = s.clone();
        s.seed = seed;
        cmd_grid(&s, &options).unwrap().1.cells.iter().map(|c| c.index).collect::<Vec<_>>()
    };
    assert_eq!(pick(3), pick(3));
    assert_eq!(pick(3).len(), 2);
}

#[test]
fn unknown_grid_parameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings("lead_actor_turn_into_driveway", dir.path());
    let options = GridOptions { axes: vec![("nope".into(), vec![1.0])], ..GridOptions::default() };
    assert_eq!(cmd_grid(&s, &options).unwrap_err().exit, Exit::Parse);
}

#[test]
fn infeasible_cells_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.mode = Mode::OpenLoop;
    let options = GridOptions { axes: vec![("distance_ahead_of_ego_m".into(), vec![50.0, 500.0])], ..GridOptions::default() };
    let (_, doc) = cmd_grid(&s, &options).unwrap();
    let status: Vec<CellStatus> = doc.cells.iter().map(|c| c.status).collect();
    assert_eq!(status, [CellStatus::Pass, CellStatus::Infeasible]);
    assert_eq!(doc.summary.pass_rate_feasible, Some(1.0));
}

fn report(measured: Option<f64>, overall: bool) -> SuccessReport {
    let tol = Tolerance { distance_m: 2.0, time_s: 0.5 };
    SuccessReport {
        routes: Vec::new(),
        route_ok: true,
        interaction: Interaction::DecelerateToStopAtPoint,
        interaction_ok: measured.is_some(),
        onset_time: measured.map(|_| 3.0),
        triggers: vec![TriggerResult {
            label: "distance".into(),
            unit: TriggerUnit::Meters,
            target: 10.0,
            time: measured.map(|_| 3.0),
            measured,
            residual: measured.map(|m| m - 10.0),
            ok: vec![overall],
        }],
        levels: vec![LevelResult { tolerance: tol, trigger_ok: overall, overall }],
    }
}

#[test]
fn not_met_is_distinct_from_infeasible_and_fail() {
    assert_eq!(classify(&CellRun::Ran(Some(report(None, false))), 0), CellStatus::NotMet);
    assert_eq!(classify(&CellRun::Ran(Some(report(Some(15.0), false))), 0), CellStatus::Fail);
    assert_eq!(classify(&CellRun::Ran(Some(report(Some(10.5), true))), 0), CellStatus::Pass);
    assert_eq!(classify(&CellRun::Infeasible("unsat".into()), 0), CellStatus::Infeasible);
    assert_eq!(classify(&CellRun::Failed("boom".into()), 0), CellStatus::Error);
    let marks: std::collections::BTreeSet<&str> =
        [CellStatus::Pass, CellStatus::Fail, CellStatus::NotMet, CellStatus::Infeasible, CellStatus::Error].map(CellStatus::mark).into();
    assert_eq!(marks.len(), 5);
}

#[test]
fn compare_modes_reports_both_legs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_compare_modes(&settings("lead_actor_turn_slow_ego", dir.path())).unwrap();
    assert_eq!(out.exit, Exit::Ok);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lead_actor_turn_slow_ego.compare.json")).unwrap()).unwrap();
    let open = doc["legs"][0]["residuals"][0].as_f64().unwrap();
    let closed = doc["legs"][1]["residuals"][0].as_f64().unwrap();
    assert_eq!(doc["legs"][0]["mode"], "open-loop-policy");
    assert!(closed.abs() <= 2.0 && open.abs() > closed.abs(), "open {open}, closed {closed}");
}

#[test]
fn compare_modes_annotates_failed_legs() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = settings("lead_actor_turn_into_driveway", dir.path());
    s.set.insert("distance_ahead_of_ego_m".into(), 500.0);
    let out = cmd_compare_modes(&s).unwrap();
    assert_eq!(out.exit, Exit::Solve);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lead_actor_turn_into_driveway.compare.json")).unwrap()).unwrap();
    assert!(doc["legs"][0]["failure"].as_str().unwrap().contains("no solution"));
    assert_eq!(doc["legs"].as_array().unwrap().len(), 2);
}
