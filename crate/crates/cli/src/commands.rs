use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use orchestra::eval::{default_tolerances, evaluate, SuccessReport};
use orchestra::orchestrator::{
    run_closed_loop, run_open_loop, run_open_loop_with_policy, scripted_ego, Execution, OrchestrationError, OrchestrationMode, Problem, RunConfig, Trace,
};
use orchestra::scenario::Scenario;
use orchestra::solver::{SmtProcess, SolveStatus, DEFAULT_LADDER, DEFAULT_STEP_TIMEOUT};
use serde::Serialize;

use crate::document::{config_hash, write_trace, Header};
use crate::plot::render_svg;
use crate::{write_atomic, Exit, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every actor, the ego included, plays the initial solution.
    OpenLoop,
    /// The scripted ego drives; the other actors play the initial solution.
    OpenLoopPolicy,
    /// The scripted ego drives; the other actors are replanned.
    ClosedLoop,
}

impl Mode {
    pub fn execution(self) -> Execution {
        match self {
            Mode::OpenLoop => Execution::OpenLoop,
            Mode::OpenLoopPolicy => Execution::OpenLoopPolicy,
            Mode::ClosedLoop => Execution::ClosedLoop,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open-loop",
            Mode::OpenLoopPolicy => "open-loop-policy",
            Mode::ClosedLoop => "closed-loop",
        }
    }
}

/// Harness options. Unset numeric fields fall back to the scenario's `[run]` table.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scenario: PathBuf,
    pub mode: Mode,
    pub replan_hz: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub ladder: Option<Vec<f64>>,
    /// Solver binary; `None` uses `$ORCHESTRA_SOLVER` or `z3`.
    pub solver: Option<PathBuf>,
    pub out: PathBuf,
    /// Only used to sample grid cells.
    pub seed: u64,
    /// Parameter overrides.
    pub set: BTreeMap<String, f64>,
}

impl Settings {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Settings {
            scenario: scenario.into(),
            mode: Mode::ClosedLoop,
            replan_hz: None,
            horizon: None,
            dt: None,
            ladder: None,
            solver: None,
            out: PathBuf::from("out"),
            seed: 0,
            set: BTreeMap::new(),
        }
    }

    pub fn backend(&self) -> SmtProcess {
        self.solver.as_ref().map_or_else(SmtProcess::from_env, SmtProcess::new)
    }

    pub fn run_config(&self, scenario: &Scenario) -> Result<RunConfig, HarnessError> {
        let config = RunConfig {
            horizon: self.horizon.unwrap_or(scenario.run.horizon),
            dt: self.dt.unwrap_or(scenario.run.dt),
            replan_hz: self.replan_hz.unwrap_or(scenario.run.replan_hz),
            ladder: self.ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec()),
            step_timeout: DEFAULT_STEP_TIMEOUT,
        };
        let bad = |m: &str| Err(HarnessError::new(Exit::Parse, m));
        if !(config.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(config.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(config.replan_hz > 0.0) {
            return bad("replan rate must be positive");
        }
        if config.ladder.is_empty() || config.ladder.iter().any(|t| !(*t >= 0.0)) || config.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ladder must be a non-empty ascending list of non-negative tolerances");
        }
        Ok(config)
    }
}

/// Everything that determines a run's trace.
#[derive(Serialize)]
struct RunIdentity<'a> {
    scenario_id: &'a str,
    program: &'a str,
    map: String,
    ego: &'a orchestra::orchestrator::IdmConfig,
    limits: &'a orchestra::dsl::BoilerplateConfig,
    parameters: &'a BTreeMap<String, f64>,
    execution: Execution,
    horizon: f64,
    dt: f64,
    replan_hz: f64,
    ladder: &'a [f64],
    seed: u64,
}

pub(crate) fn run_hash(scenario: &Scenario, problem: &Problem, config: &RunConfig, mode: Mode, seed: u64) -> Result<String, HarnessError> {
    let map = config_hash(&scenario.graph()?.to_json());
    Ok(config_hash(&RunIdentity {
        scenario_id: &scenario.id,
        program: &scenario.program_text,
        map,
        ego: &scenario.ego,
        limits: &scenario.limits,
        parameters: &problem.bindings,
        execution: mode.execution(),
        horizon: config.horizon,
        dt: config.dt,
        replan_hz: config.replan_hz,
        ladder: &config.ladder,
        seed,
    }))
}

pub(crate) fn execute(
    scenario: &Scenario,
    problem: &Problem,
    config: &RunConfig,
    backend: &SmtProcess,
    mode: Mode,
) -> Result<Trace, OrchestrationError> {
    let mut ego = scripted_ego(&scenario.ego);
    match mode {
        Mode::OpenLoop => run_open_loop(problem, backend, config),
        Mode::OpenLoopPolicy => run_open_loop_with_policy(problem, backend, &mut ego, config),
        Mode::ClosedLoop => run_closed_loop(problem, backend, &mut ego, config),
    }
}

pub(crate) fn assess(scenario: &Scenario, problem: &Problem, trace: &Trace) -> Result<Option<SuccessReport>, HarnessError> {
    match scenario.criteria() {
        None => Ok(None),
        Some(c) => Ok(Some(evaluate(trace, &problem.paths, c, &problem.bindings, &default_tolerances())?)),
    }
}

/// Passing means every check holds at the loosest level; a scenario without criteria passes.
pub(crate) fn passed(report: &Option<SuccessReport>) -> bool {
    report.as_ref().is_none_or(|r| r.overall(r.levels.len().saturating_sub(1)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub upper_s: f64,
    pub count: usize,
}

/// Distribution of rollout solve times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTimes {
    pub count: usize,
    pub median_s: Option<f64>,
    pub p90_s: Option<f64>,
    pub max_s: Option<f64>,
    pub max_assertions: usize,
    pub histogram: Vec<Bin>,
}

const BIN_S: f64 = 0.1;

impl SolveTimes {
    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Self {
        let mut times = Vec::new();
        let mut max_assertions = 0;
        for t in traces {
            for r in t.replans.iter().filter(|r| r.mode == OrchestrationMode::ClosedLoopRollout && !r.attempts.is_empty()) {
                times.push(r.wall_time_s);
                max_assertions = max_assertions.max(r.assertions);
            }
        }
        times.sort_by(f64::total_cmp);
        let q = |p: f64| (!times.is_empty()).then(|| times[((times.len() - 1) as f64 * p).round() as usize]);
        let mut histogram: Vec<Bin> = Vec::new();
        for &t in &times {
            let upper = ((t / BIN_S).floor() + 1.0) * BIN_S;
            match histogram.last_mut() {
                Some(b) if (b.upper_s - upper).abs() < 1e-9 => b.count += 1,
                _ => histogram.push(Bin { upper_s: upper, count: 1 }),
            }
        }
        SolveTimes { count: times.len(), median_s: q(0.5), p90_s: q(0.9), max_s: times.last().copied(), max_assertions, histogram }
    }

    pub fn summary(&self) -> String {
        match (self.median_s, self.p90_s, self.max_s) {
            (Some(m), Some(p), Some(x)) => {
                format!("{} rollout solves: median {m:.3} s, p90 {p:.3} s, max {x:.3} s, up to {} assertions", self.count, self.max_assertions)
            }
            _ => "no rollout solves".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplanSummary {
    pub time: f64,
    pub mode: OrchestrationMode,
    pub status: SolveStatus,
    pub tolerance: Option<f64>,
    pub assertions: usize,
    pub preferences_applied: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub mode: Mode,
    pub config_hash: String,
    pub parameters: BTreeMap<String, f64>,
    pub passed: bool,
    pub report: Option<SuccessReport>,
    pub solve_times: SolveTimes,
    pub replans: Vec<ReplanSummary>,
}

impl RunReport {
    fn new(scenario: &Scenario, problem: &Problem, mode: Mode, hash: String, trace: &Trace, report: Option<SuccessReport>) -> Self {
        RunReport {
            scenario_id: scenario.id.clone(),
            mode,
            config_hash: hash,
            parameters: problem.bindings.clone(),
            passed: passed(&report),
            report,
            solve_times: SolveTimes::from_traces([trace]),
            replans: trace
                .replans
                .iter()
                .map(|r| ReplanSummary {
                    time: r.time,
                    mode: r.mode,
                    status: r.status,
                    tolerance: r.tolerance,
                    assertions: r.assertions,
                    preferences_applied: r.preferences_applied,
                    wall_time_s: r.wall_time_s,
                })
                .collect(),
        }
    }
}

/// Result of a command that ran to completion, possibly with a failing verdict.
#[derive(Debug)]
pub struct Outcome {
    pub exit: Exit,
    /// Human-readable lines for standard output.
    pub lines: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

pub(crate) fn load(settings: &Settings) -> Result<(Scenario, Problem), HarnessError> {
    let scenario = Scenario::load(&settings.scenario)?;
    let problem = scenario.check(&settings.set)?;
    Ok((scenario, problem))
}

pub(crate) fn describe(report: &Option<SuccessReport>) -> Vec<String> {
    let Some(r) = report else { return vec!["no success criteria declared".into()] };
    let mut lines = vec![format!(
        "route {}, interaction {} (onset {})",
        verdict(r.route_ok),
        verdict(r.interaction_ok),
        r.onset_time.map_or("none".into(), |t| format!("{t:.1} s"))
    )];
    for t in &r.triggers {
        lines.push(format!(
            "  {}: target {:.2}, measured {}, residual {}",
            t.label,
            t.target,
            t.measured.map_or("-".into(), |m| format!("{m:.2}")),
            t.residual.map_or("not met".into(), |m| format!("{m:+.2}"))
        ));
    }
    for l in &r.levels {
        lines.push(format!("  level {} m / {} s: {}", l.tolerance.distance_m, l.tolerance.time_s, verdict(l.overall)));
    }
    lines
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn stem(out: &Path, id: &str, suffix: &str) -> PathBuf {
    out.join(format!("{id}{suffix}"))
}

/// Writes the trace document, the plot and `report` for one leg.
fn write_leg(
    settings: &Settings,
    scenario: &Scenario,
    problem: &Problem,
    trace: &Trace,
    hash: &str,
    tag: &str,
) -> Result<Vec<PathBuf>, HarnessError> {
    let header = Header::new(trace, hash.to_string(), problem.bindings.clone());
    let trace_path = stem(&settings.out, &scenario.id, &format!("{tag}.trace.jsonl"));
    write_atomic(&trace_path, &write_trace(&header, trace))?;
    let svg_path = stem(&settings.out, &scenario.id, &format!("{tag}.svg"));
    let title = format!("{} [{}]", scenario.id, tag.trim_start_matches('.'));
    write_atomic(&svg_path, &render_svg(&scenario.graph()?, &problem.paths, trace, &title))?;
    Ok(vec![trace_path, svg_path])
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Runs one scenario and writes `<id>.trace.jsonl`, `<id>.svg` and `<id>.report.json`.
pub fn cmd_run(settings: &Settings) -> Result<Outcome, HarnessError> {
    let (scenario, problem) = load(settings)?;
    let config = settings.run_config(&scenario)?;
    let hash = run_hash(&scenario, &problem, &config, settings.mode, settings.seed)?;
    let trace = execute(&scenario, &problem, &config, &settings.backend(), settings.mode)?;
    let report = assess(&scenario, &problem, &trace)?;
    let mut artifacts = write_leg(settings, &scenario, &problem, &trace, &hash, "")?;
    let doc = RunReport::new(&scenario, &problem, settings.mode, hash, &trace, report);
    let report_path = stem(&settings.out, &scenario.id, ".report.json");
    write_atomic(&report_path, &to_json(&doc))?;
    artifacts.push(report_path);

    let mut lines = vec![format!("{} ({}): {}", scenario.id, settings.mode.name(), verdict(doc.passed))];
    lines.extend(describe(&doc.report));
    if settings.mode == Mode::ClosedLoop {
        lines.push(doc.solve_times.summary());
    }
    Ok(Outcome { exit: if doc.passed { Exit::Ok } else { Exit::Evaluation }, lines, artifacts })
}

#[derive(Debug, Clone, Serialize)]
pub struct LegReport {
    pub mode: Mode,
    pub config_hash: String,
    /// Set when the leg could not be orchestrated or evaluated.
    pub failure: Option<String>,
    pub passed: bool,
    pub residuals: Vec<Option<f64>>,
    pub report: Option<SuccessReport>,
    pub solve_times: Option<SolveTimes>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub scenario_id: String,
    pub parameters: BTreeMap<String, f64>,
    pub triggers: Vec<String>,
    pub legs: Vec<LegReport>,
}

/// Runs the scenario open-loop and closed-loop under the same scripted ego.
pub fn cmd_compare_modes(settings: &Settings) -> Result<Outcome, HarnessError> {
    let (scenario, problem) = load(settings)?;
    let config = settings.run_config(&scenario)?;
    let backend = settings.backend();
    let mut legs = Vec::new();
    let mut artifacts = Vec::new();
    let mut worst = Exit::Ok;
    for mode in [Mode::OpenLoopPolicy, Mode::ClosedLoop] {
        let hash = run_hash(&scenario, &problem, &config, mode, settings.seed)?;
        let leg = execute(&scenario, &problem, &config, &backend, mode)
            .map_err(HarnessError::from)
            .and_then(|trace| assess(&scenario, &problem, &trace).map(|r| (trace, r)));
        match leg {
            Ok((trace, report)) => {
                artifacts.extend(write_leg(settings, &scenario, &problem, &trace, &hash, &format!(".{}", mode.name()))?);
                legs.push(LegReport {
                    mode,
                    config_hash: hash,
                    failure: None,
                    passed: passed(&report),
                    residuals: report.as_ref().map_or(Vec::new(), |r| r.triggers.iter().map(|t| t.residual).collect()),
                    report,
                    solve_times: Some(SolveTimes::from_traces([&trace])),
                });
            }
            Err(e) => {
                if worst == Exit::Ok {
                    worst = e.exit;
                }
                legs.push(LegReport {
                    mode,
                    config_hash: hash,
                    failure: Some(e.message),
                    passed: false,
                    residuals: Vec::new(),
                    report: None,
                    solve_times: None,
                });
            }
        }
    }
    let triggers = scenario.criteria().map_or(Vec::new(), |c| c.triggers.iter().map(|t| t.label()).collect());
    let doc = Comparison { scenario_id: scenario.id.clone(), parameters: problem.bindings.clone(), triggers, legs };
    let path = stem(&settings.out, &scenario.id, ".compare.json");
    write_atomic(&path, &to_json(&doc))?;
    artifacts.push(path);

    let mut lines = vec![format!("{:<36} {:>18} {:>18}", "", Mode::OpenLoopPolicy.name(), Mode::ClosedLoop.name())];
    let cell = |leg: &LegReport, f: &dyn Fn(&LegReport) -> String| if leg.failure.is_some() { "failed".to_string() } else { f(leg) };
    lines.push(format!(
        "{:<36} {:>18} {:>18}",
        "verdict",
        cell(&doc.legs[0], &|l| verdict(l.passed).into()),
        cell(&doc.legs[1], &|l| verdict(l.passed).into())
    ));
    for (i, label) in doc.triggers.iter().enumerate() {
        let res = |l: &LegReport| l.residuals.get(i).copied().flatten().map_or("not met".into(), |r| format!("{r:+.2}"));
        lines.push(format!("{:<36} {:>18} {:>18}", truncate(label, 36), cell(&doc.legs[0], &res), cell(&doc.legs[1], &res)));
    }
    for leg in doc.legs.iter().filter(|l| l.failure.is_some()) {
        lines.push(format!("{} failed: {}", leg.mode.name(), leg.failure.as_deref().unwrap_or_default()));
    }
    Ok(Outcome { exit: worst, lines, artifacts })
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        s.chars().take(n - 1).chain(['…']).collect()
    }
}

/// Parses and lowers the scenario without solving.
pub fn cmd_validate(settings: &Settings) -> Result<Outcome, HarnessError> {
    let (scenario, problem) = load(settings)?;
    let constraints = scenario.program.constraints.len();
    let lines = vec![format!(
        "{}: {} actors, {} constraints, {} parameters bound",
        scenario.id,
        problem.profiles.len(),
        constraints,
        problem.bindings.len()
    )];
    Ok(Outcome { exit: Exit::Ok, lines, artifacts: Vec::new() })
}
