//! Open- and closed-loop execution of scenario programs.

mod ego;
mod rollout;

pub use ego::{scripted_ego, EgoPolicy, IdmConfig, IdmPolicy, EGO_ACCEL_MAX, EGO_ACCEL_MIN};
pub use rollout::{
    assemble_initial, assemble_rollout, rebase, rebase_hero, ActorPlan, Assembly, HOLD_SUFFIX, MIN_BUFFER_M, NOW_KNOT, SPLIT_KNOT,
};

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{BoilerplateConfig, LowerError, ScenarioProgram};
use crate::lane_map::{register_conflict, resolve_route, LaneGraph, MapError, RoutePath};
use crate::motion::{ConcreteError, ConcreteProfile, MotionProfile, ProfileError};
use crate::solver::{encode, solve_with_ladder, Backend, SolveOutcome, SolveStatus, SolverError, DEFAULT_LADDER, DEFAULT_STEP_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrchestrationMode {
    OpenLoop,
    ClosedLoopInitialization,
    ClosedLoopRollout,
}

#[derive(Debug, Error)]
pub enum OrchestrationError {
    #[error("actor {actor}: {source}")]
    Route { actor: usize, source: MapError },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("initialization solve failed: {0}")]
    Solve(#[from] SolverError),
    #[error("actor {actor} left its path at t = {time}: {source}")]
    OffPath { actor: usize, time: f64, source: MapError },
    #[error("model does not instantiate a profile: {0}")]
    Instantiate(#[from] ConcreteError),
    #[error("mode {0:?} is not valid here")]
    Mode(OrchestrationMode),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One actor's planar state and its arclength along its own path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub a: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    /// Indexed by actor id.
    pub actors: Vec<ActorState>,
    /// Buffer, meters, used to weaken reactive constraints at the next replan.
    pub value: f64,
}

/// Outcome of one solve during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub time: f64,
    pub mode: OrchestrationMode,
    pub status: SolveStatus,
    /// Tolerance granted on success.
    pub tolerance: Option<f64>,
    pub assertions: usize,
    pub preferences_applied: usize,
    /// Ladder steps tried, as (tolerance, status).
    pub attempts: Vec<(f64, SolveStatus)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Solved profiles, starting at `time`, for each actor the solve covered.
    #[serde(default)]
    pub plans: Vec<ConcreteProfile>,
    /// Wall-clock solve time; left out of documents so that they stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// How the ego moves during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Every actor, the ego included, follows the initial solution.
    OpenLoop,
    /// The ego runs its policy; the others follow the initial solution.
    OpenLoopPolicy,
    /// The ego runs its policy and the others are replanned periodically.
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario_id: String,
    pub execution: Execution,
    pub dt: f64,
    pub frames: Vec<WorldState>,
    pub replans: Vec<ReplanRecord>,
}

impl Trace {
    /// Wall-clock times of the rollout solves. Rollouts skipped for lack of
    /// anything to plan are left out.
    pub fn rollout_solve_times(&self) -> Vec<f64> {
        self.replans
            .iter()
            .filter(|r| r.mode == OrchestrationMode::ClosedLoopRollout && !r.attempts.is_empty())
            .map(|r| r.wall_time_s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Trace length, seconds.
    pub horizon: f64,
    pub dt: f64,
    pub replan_hz: f64,
    pub ladder: Vec<f64>,
    pub step_timeout: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 20.0,
            dt: 0.1,
            replan_hz: 1.0,
            ladder: DEFAULT_LADDER.to_vec(),
            step_timeout: DEFAULT_STEP_TIMEOUT,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), OrchestrationError> {
        if !(self.dt > 0.0) || !(self.horizon >= 0.0) {
            return Err(OrchestrationError::Config("dt must be positive and horizon non-negative".into()));
        }
        if !(self.replan_hz > 0.0) || 1.0 / self.replan_hz < self.dt - 1e-12 {
            return Err(OrchestrationError::Config("replan period must be at least one tick".into()));
        }
        Ok(())
    }

    fn ticks(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize
    }

    fn replan_period_ticks(&self) -> usize {
        ((1.0 / (self.replan_hz * self.dt)).round() as usize).max(1)
    }
}

/// A lowered-ready scenario: program, bound parameters, paths and skeleton profiles.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario_id: String,
    pub program: ScenarioProgram,
    pub bindings: BTreeMap<String, f64>,
    /// Indexed by actor id; conflicts between the ego and each other actor are registered.
    pub paths: Vec<RoutePath>,
    /// Declared skeletons, indexed by actor id.
    pub profiles: Vec<MotionProfile>,
    pub limits: BoilerplateConfig,
    pub ego: usize,
}

impl Problem {
    pub fn new(
        scenario_id: &str,
        program: &ScenarioProgram,
        graph: &LaneGraph,
        bindings: BTreeMap<String, f64>,
        limits: BoilerplateConfig,
    ) -> Result<Problem, OrchestrationError> {
        let mut paths = Vec::with_capacity(program.actors.len());
        let mut profiles = Vec::with_capacity(program.actors.len());
        for a in &program.actors {
            paths.push(resolve_route(graph, &a.route).map_err(|source| OrchestrationError::Route { actor: a.id, source })?);
            profiles.push(MotionProfile::build(a.id, a.knots.clone(), &a.piece_specs())?);
        }
        for i in 1..paths.len() {
            let (ego, rest) = paths.split_at_mut(i);
            match register_conflict(&mut ego[0], &mut rest[0]) {
                Ok(_) | Err(MapError::NoConflict) => {}
                Err(source) => return Err(OrchestrationError::Route { actor: i, source }),
            }
        }
        Ok(Problem {
            scenario_id: scenario_id.to_string(),
            program: program.clone(),
            bindings,
            paths,
            profiles,
            limits,
            ego: 0,
        })
    }
}

fn record(time: f64, mode: OrchestrationMode, assembly: &Assembly, result: &Result<SolveOutcome, SolverError>) -> ReplanRecord {
    let assertions = encode(&assembly.constraints, &assembly.profiles).map(|r| r.assertions().len()).unwrap_or(0);
    match result {
        Ok(out) => ReplanRecord {
            time,
            mode,
            status: out.status,
            tolerance: Some(out.stats.tolerance),
            assertions,
            preferences_applied: out.stats.preferences_applied,
            attempts: out.stats.attempts.iter().map(|a| (a.tolerance, a.status)).collect(),
            error: None,
            plans: Vec::new(),
            wall_time_s: out.stats.wall_time_s,
        },
        Err(e) => ReplanRecord {
            time,
            mode,
            status: match e {
                SolverError::LadderExhausted { attempts, .. } => attempts.last().map_or(SolveStatus::Unknown, |a| a.status),
                _ => SolveStatus::Unknown,
            },
            tolerance: None,
            assertions,
            preferences_applied: 0,
            attempts: match e {
                SolverError::LadderExhausted { attempts, .. } => attempts.iter().map(|a| (a.tolerance, a.status)).collect(),
                _ => Vec::new(),
            },
            error: Some(e.to_string()),
            plans: Vec::new(),
            wall_time_s: 0.0,
        },
    }
}

/// Solves an assembly and returns one plan per solved profile, starting at `time`.
pub fn solve_assembly(
    backend: &dyn Backend,
    assembly: &Assembly,
    config: &RunConfig,
    time: f64,
) -> (Result<(Vec<ActorPlan>, SolveOutcome), OrchestrationError>, ReplanRecord) {
    let result = encode(&assembly.constraints, &assembly.profiles).and_then(|mut request| {
        request.preferences = assembly.preferences.clone();
        solve_with_ladder(backend, &request, &config.ladder, config.step_timeout)
    });
    let mut rec = record(time, assembly.mode, assembly, &result);
    let out = match result {
        Err(e) => Err(OrchestrationError::Solve(e)),
        Ok(outcome) => {
            let model = outcome.model.clone().expect("sat outcome has a model");
            assembly
                .profiles
                .iter()
                .map(|p| {
                    let concrete = p.instantiate_exact(&model)?;
                    Ok(ActorPlan { profile: p.clone(), concrete, start: time })
                })
                .collect::<Result<Vec<_>, ConcreteError>>()
                .map(|plans| (plans, outcome))
                .map_err(OrchestrationError::from)
        }
    };
    if let Ok((plans, _)) = &out {
        rec.plans = plans.iter().map(|p| p.concrete.clone()).collect();
    }
    (out, rec)
}

fn actor_state(id: usize, path: &RoutePath, [s, v, a]: [f64; 3]) -> ActorState {
    let c = path.from_frenet(s, v, a).state;
    ActorState { id, x: c.x, y: c.y, theta: c.theta, v: c.v, a, s }
}

/// Longitudinal state of a policy-driven ego.
#[derive(Debug, Clone, Copy)]
struct EgoDynamics {
    s: f64,
    v: f64,
    a: f64,
}

impl EgoDynamics {
    fn advance(&mut self, command: f64, dt: f64) {
        let mut a = command.clamp(EGO_ACCEL_MIN, EGO_ACCEL_MAX);
        if self.v + a * dt < 0.0 {
            a = -self.v / dt;
        }
        let v = self.v + a * dt;
        self.s += 0.5 * (self.v + v) * dt;
        self.v = v;
        self.a = a;
    }
}

struct Runner<'a> {
    problem: &'a Problem,
    backend: &'a dyn Backend,
    config: &'a RunConfig,
    plans: Vec<ActorPlan>,
    ego: Option<EgoDynamics>,
    value: f64,
}

impl Runner<'_> {
    fn world(&self, time: f64) -> WorldState {
        let actors = self
            .plans
            .iter()
            .enumerate()
            .map(|(id, plan)| {
                let state = match (&self.ego, id == self.problem.ego) {
                    (Some(e), true) => [e.s, e.v, e.a],
                    _ => plan.state(time),
                };
                actor_state(id, &self.problem.paths[id], state)
            })
            .collect();
        WorldState { time, actors, value: self.value }
    }

    fn replan(&mut self, world: &WorldState) -> ReplanRecord {
        let assembly = match assemble_rollout(self.problem, &self.plans, world) {
            Ok(a) => a,
            Err(e) => {
                return ReplanRecord {
                    time: world.time,
                    mode: OrchestrationMode::ClosedLoopRollout,
                    status: SolveStatus::Unknown,
                    tolerance: None,
                    assertions: 0,
                    preferences_applied: 0,
                    attempts: Vec::new(),
                    error: Some(e.to_string()),
                    plans: Vec::new(),
                    wall_time_s: 0.0,
                }
            }
        };
        if assembly.profiles.is_empty() {
            // Every actor has finished its plan; there is nothing to solve.
            return ReplanRecord {
                time: world.time,
                mode: OrchestrationMode::ClosedLoopRollout,
                status: SolveStatus::Sat,
                tolerance: None,
                assertions: 0,
                preferences_applied: 0,
                attempts: Vec::new(),
                error: None,
                plans: Vec::new(),
                wall_time_s: 0.0,
            };
        }
        let (result, rec) = solve_assembly(self.backend, &assembly, self.config, world.time);
        if let Ok((plans, outcome)) = result {
            // A policy-driven ego keeps its own dynamics; its new plan only
            // tracks which of its knots are still ahead.
            for plan in plans {
                let id = plan.profile.actor_id;
                self.plans[id] = plan;
            }
            self.value = outcome.stats.tolerance.max(MIN_BUFFER_M);
        }
        rec
    }
}

fn execute(
    problem: &Problem,
    backend: &dyn Backend,
    config: &RunConfig,
    policy: Option<&mut dyn EgoPolicy>,
    replanning: bool,
) -> Result<Trace, OrchestrationError> {
    config.validate()?;
    let mode = if policy.is_some() { OrchestrationMode::ClosedLoopInitialization } else { OrchestrationMode::OpenLoop };
    let assembly = assemble_initial(problem, mode)?;
    let (result, first) = solve_assembly(backend, &assembly, config, 0.0);
    let (plans, outcome) = result?;
    let ego = policy.as_ref().map(|_| {
        let [s, v, a] = plans[problem.ego].state(0.0);
        EgoDynamics { s, v, a }
    });
    let execution = match (policy.is_some(), replanning) {
        (false, _) => Execution::OpenLoop,
        (true, false) => Execution::OpenLoopPolicy,
        (true, true) => Execution::ClosedLoop,
    };
    let mut runner = Runner { problem, backend, config, plans, ego, value: outcome.stats.tolerance.max(MIN_BUFFER_M) };
    let mut policy = policy;
    let mut frames = vec![runner.world(0.0)];
    let mut replans = vec![first];
    let period = config.replan_period_ticks();
    for k in 1..=config.ticks() {
        let t = k as f64 * config.dt;
        if let (Some(p), Some(e)) = (policy.as_deref_mut(), runner.ego.as_mut()) {
            let prev = frames.last().unwrap();
            let command = p.step(prev, problem.ego, &problem.paths[problem.ego]);
            e.advance(command, config.dt);
        }
        let mut world = runner.world(t);
        if replanning && k % period == 0 {
            replans.push(runner.replan(&world));
            world = runner.world(t);
        }
        frames.push(world);
    }
    Ok(Trace { scenario_id: problem.scenario_id.clone(), execution, dt: config.dt, frames, replans })
}

/// Solves once and plays every actor, the ego included, along its solution.
pub fn run_open_loop(problem: &Problem, backend: &dyn Backend, config: &RunConfig) -> Result<Trace, OrchestrationError> {
    execute(problem, backend, config, None, false)
}

/// Solves once; the ego follows `policy` while the other actors play their solution.
pub fn run_open_loop_with_policy(
    problem: &Problem,
    backend: &dyn Backend,
    policy: &mut dyn EgoPolicy,
    config: &RunConfig,
) -> Result<Trace, OrchestrationError> {
    execute(problem, backend, config, Some(policy), false)
}

/// The ego follows `policy`; the other actors are replanned every `1 / replan_hz` seconds.
pub fn run_closed_loop(
    problem: &Problem,
    backend: &dyn Backend,
    policy: &mut dyn EgoPolicy,
    config: &RunConfig,
) -> Result<Trace, OrchestrationError> {
    execute(problem, backend, config, Some(policy), true)
}
