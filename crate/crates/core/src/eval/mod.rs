//! Success checks over executed traces: intended route, interaction pattern
//! and trigger conditions, at one or more tolerance levels.

mod batch;

pub use batch::{batch_report, BatchTable, FamilyRow};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Landmark;
use crate::lane_map::{Heading, RoutePath};
use crate::orchestrator::{Trace, WorldState};

/// Acceleration magnitude that starts an interaction, m/s².
pub const ONSET_ACCEL_MPSS: f64 = 0.5;
/// How long the onset acceleration must hold, seconds.
pub const ONSET_SUSTAIN_S: f64 = 0.5;
/// At or below this speed an actor counts as stopped, m/s.
pub const STOP_SPEED_MPS: f64 = 0.1;
/// At or above this speed a stopped actor counts as going again, m/s.
pub const GO_SPEED_MPS: f64 = 1.0;
/// Peak deceleration that makes a stop a hard brake, m/s².
pub const HARD_BRAKE_MPSS: f64 = 3.0;
/// Lateral distance from the declared path still counted as on route, meters.
pub const ROUTE_LATERAL_M: f64 = 1.0;
/// Share of frames that must be on route.
pub const ROUTE_FRACTION: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trace has no frames")]
    EmptyTrace,
    #[error("actor {0} is not in the trace")]
    UnknownActor(usize),
    #[error("unknown landmark `{0}`")]
    UnknownLandmark(String),
    #[error("actor {actor} has no `{landmark}` on its path")]
    MissingLandmark { actor: usize, landmark: String },
    #[error("actor {0} has no conflict point with the ego")]
    MissingConflict(usize),
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("trigger `{0}` needs a `{1}` field")]
    IncompleteTrigger(String, &'static str),
    #[error("tolerance levels must be non-empty, non-negative and ascending")]
    InvalidTolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Yield,
    NoYield,
    StopAndGo,
    HardBrakeToStop,
    DecelerateToStopAtPoint,
}

impl Interaction {
    /// Sign of the acceleration that marks the onset.
    fn onset_sign(self) -> f64 {
        if self == Interaction::NoYield {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityKind {
    /// Landmark arclength minus the actor's arclength.
    DistanceToLandmark,
    /// The actor's signed distance past its conflict point minus the other's.
    GapToActor,
    /// Remaining distance to the landmark over current speed.
    TimeToArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerUnit {
    Meters,
    Seconds,
}

/// A trigger target: a literal or the name of a scenario parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Value(f64),
    Parameter(String),
}

/// When a trigger is measured.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Anchor {
    /// The hero's interaction onset frame.
    #[default]
    Onset,
    /// The hero reaching a landmark on its path.
    Arrival(String),
    /// The hero first slowing to a stop.
    Stop,
}

impl TryFrom<String> for Anchor {
    type Error = String;

    fn try_from(text: String) -> Result<Self, String> {
        match text.as_str() {
            "onset" => Ok(Anchor::Onset),
            "stop" => Ok(Anchor::Stop),
            _ => match text.strip_prefix("arrival:") {
                Some(l) if Landmark::parse(l).is_some() => Ok(Anchor::Arrival(l.to_string())),
                _ => Err(format!("unknown anchor `{text}`, expected onset, stop or arrival:<landmark>")),
            },
        }
    }
}

impl From<Anchor> for String {
    fn from(a: Anchor) -> String {
        a.to_string()
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Onset => f.write_str("onset"),
            Anchor::Stop => f.write_str("stop"),
            Anchor::Arrival(l) => write!(f, "arrival:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub quantity: QuantityKind,
    pub actor: usize,
    /// Second actor of a gap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark: Option<String>,
    pub target: Target,
    #[serde(default)]
    pub anchor: Anchor,
}

impl TriggerSpec {
    pub fn unit(&self) -> TriggerUnit {
        match self.quantity {
            QuantityKind::TimeToArrival => TriggerUnit::Seconds,
            _ => TriggerUnit::Meters,
        }
    }

    pub fn label(&self) -> String {
        let what = match (self.quantity, &self.landmark, self.other) {
            (QuantityKind::GapToActor, _, Some(o)) => format!("gap A{} to A{o}", self.actor),
            (QuantityKind::DistanceToLandmark, Some(l), _) => format!("A{} distance to {l}", self.actor),
            (QuantityKind::TimeToArrival, Some(l), _) => format!("A{} time to {l}", self.actor),
            (q, _, _) => format!("A{} {q:?}", self.actor),
        };
        format!("{what} at {}", self.anchor)
    }

    fn landmark(&self) -> Result<Landmark, EvalError> {
        let name = self.landmark.as_deref().ok_or_else(|| EvalError::IncompleteTrigger(self.label(), "landmark"))?;
        Landmark::parse(name).ok_or_else(|| EvalError::UnknownLandmark(name.to_string()))
    }
}

fn default_hero() -> usize {
    1
}

/// What a successful run of a scenario looks like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessCriteria {
    /// The actor whose behavior the interaction and anchors refer to.
    #[serde(default = "default_hero")]
    pub hero: usize,
    pub interaction: Interaction,
    #[serde(default, rename = "trigger")]
    pub triggers: Vec<TriggerSpec>,
    /// Intended route per actor; filled from the scenario's actor declarations.
    #[serde(skip)]
    pub routes: BTreeMap<usize, Vec<Heading>>,
}

/// One tolerance level. Distance triggers use `distance_m`, time triggers `time_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub distance_m: f64,
    pub time_s: f64,
}

impl Tolerance {
    fn for_unit(&self, unit: TriggerUnit) -> f64 {
        match unit {
            TriggerUnit::Meters => self.distance_m,
            TriggerUnit::Seconds => self.time_s,
        }
    }
}

pub fn default_tolerances() -> Vec<Tolerance> {
    vec![Tolerance { distance_m: 2.0, time_s: 0.5 }, Tolerance { distance_m: 5.0, time_s: 1.0 }]
}

pub fn validate_tolerances(levels: &[Tolerance]) -> Result<(), EvalError> {
    let ok = !levels.is_empty()
        && levels.iter().all(|l| l.distance_m >= 0.0 && l.time_s >= 0.0)
        && levels.windows(2).all(|w| w[0].distance_m <= w[1].distance_m && w[0].time_s <= w[1].time_s);
    if ok {
        Ok(())
    } else {
        Err(EvalError::InvalidTolerances)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub actor: usize,
    /// Share of frames within the lateral band.
    pub on_path_fraction: f64,
    /// Whether the actor got onto the last declared road.
    pub reached_final: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerResult {
    pub label: String,
    pub unit: TriggerUnit,
    pub target: f64,
    /// Anchor time, when the anchor occurred.
    pub time: Option<f64>,
    pub measured: Option<f64>,
    /// Measured minus target.
    pub residual: Option<f64>,
    /// Pass or fail per tolerance level.
    pub ok: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub tolerance: Tolerance,
    pub trigger_ok: bool,
    pub overall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub routes: Vec<RouteResult>,
    pub route_ok: bool,
    pub interaction: Interaction,
    pub interaction_ok: bool,
    /// Time of the hero's interaction onset, if any.
    pub onset_time: Option<f64>,
    pub triggers: Vec<TriggerResult>,
    pub levels: Vec<LevelResult>,
}

impl SuccessReport {
    pub fn overall(&self, level: usize) -> bool {
        self.levels.get(level).is_some_and(|l| l.overall)
    }
}

/// First frame index where `actor`'s acceleration reaches the onset threshold
/// in the interaction's direction and stays there for the sustain window.
pub fn interaction_onset(trace: &Trace, actor: usize, interaction: Interaction) -> Option<usize> {
    let frames = &trace.frames;
    let sign = interaction.onset_sign();
    let hot = |f: &WorldState| f.actors.get(actor).is_some_and(|a| sign * a.a >= ONSET_ACCEL_MPSS);
    (0..frames.len()).find(|&k| {
        let start = frames[k].time;
        let mut covered = false;
        for f in &frames[k..] {
            if f.time > start + ONSET_SUSTAIN_S + 1e-9 {
                break;
            }
            if !hot(f) {
                return false;
            }
            covered |= f.time >= start + ONSET_SUSTAIN_S - 1e-9;
        }
        covered
    })
}

/// Time at which `value` first reaches `threshold` going in direction `sign`,
/// interpolated between frames.
fn first_crossing(frames: &[WorldState], value: impl Fn(&WorldState) -> f64, threshold: f64, sign: f64) -> Option<f64> {
    let reached = |x: f64| sign * (x - threshold) >= 0.0;
    let v0 = value(&frames[0]);
    if reached(v0) {
        return Some(frames[0].time);
    }
    frames.windows(2).find_map(|w| {
        let (a, b) = (value(&w[0]), value(&w[1]));
        reached(b).then(|| {
            let u = if b == a { 1.0 } else { ((threshold - a) / (b - a)).clamp(0.0, 1.0) };
            w[0].time + u * (w[1].time - w[0].time)
        })
    })
}

/// `value` at time `t`, linear between frames and clamped at the ends.
fn value_at(frames: &[WorldState], value: impl Fn(&WorldState) -> f64, t: f64) -> f64 {
    let k = frames.partition_point(|f| f.time <= t);
    if k == 0 {
        return value(&frames[0]);
    }
    if k == frames.len() {
        return value(&frames[k - 1]);
    }
    let (a, b) = (&frames[k - 1], &frames[k]);
    let u = (t - a.time) / (b.time - a.time);
    value(a) + u * (value(b) - value(a))
}

struct Context<'a> {
    frames: &'a [WorldState],
    paths: &'a [RoutePath],
    hero: usize,
}

impl Context<'_> {
    fn path(&self, actor: usize) -> Result<&RoutePath, EvalError> {
        match (self.paths.get(actor), self.frames[0].actors.get(actor)) {
            (Some(p), Some(_)) => Ok(p),
            _ => Err(EvalError::UnknownActor(actor)),
        }
    }

    fn locate(&self, actor: usize, landmark: Landmark) -> Result<f64, EvalError> {
        let path = self.path(actor)?;
        landmark.locate(path).ok_or_else(|| match landmark {
            Landmark::ConflictPoint => EvalError::MissingConflict(actor),
            _ => EvalError::MissingLandmark { actor, landmark: landmark.name().to_string() },
        })
    }

    fn arclength(&self, actor: usize) -> impl Fn(&WorldState) -> f64 {
        move |f: &WorldState| f.actors[actor].s
    }

    fn speed(&self, actor: usize) -> impl Fn(&WorldState) -> f64 {
        move |f: &WorldState| f.actors[actor].v
    }

    fn passage(&self, actor: usize, s: f64) -> Option<f64> {
        first_crossing(self.frames, self.arclength(actor), s, 1.0)
    }

    fn stop_time(&self, after: f64) -> Option<f64> {
        let k = self.frames.iter().position(|f| f.time >= after)?;
        first_crossing(&self.frames[k..], self.speed(self.hero), STOP_SPEED_MPS, -1.0)
    }

    fn route(&self, actor: usize, route: &[Heading]) -> Result<RouteResult, EvalError> {
        let path = self.path(actor)?;
        let mut on = 0usize;
        let mut furthest = f64::NEG_INFINITY;
        for f in self.frames {
            let a = &f.actors[actor];
            let p = path.project(a.x, a.y);
            if p.lateral.abs() <= ROUTE_LATERAL_M {
                on += 1;
                furthest = furthest.max(p.s);
            }
        }
        let on_path_fraction = on as f64 / self.frames.len() as f64;
        // A turning route is complete once the actor has left the turn onto the final road.
        let reached_final = match path.landmark("turn_end") {
            Some(end) if route.len() > 1 => furthest >= end,
            _ => true,
        };
        Ok(RouteResult { actor, on_path_fraction, reached_final, ok: on_path_fraction >= ROUTE_FRACTION && reached_final })
    }

    fn interaction(&self, interaction: Interaction, onset: Option<f64>) -> Result<bool, EvalError> {
        let hero = self.hero;
        let needs_conflict = matches!(interaction, Interaction::Yield | Interaction::NoYield | Interaction::StopAndGo);
        let hero_pass = if needs_conflict {
            let s = self.locate(hero, Landmark::ConflictPoint)?;
            self.passage(hero, s)
        } else {
            None
        };
        let ego_pass = if matches!(interaction, Interaction::Yield | Interaction::NoYield) {
            let s = self.locate(0, Landmark::ConflictPoint)?;
            self.passage(0, s)
        } else {
            None
        };
        Ok(match interaction {
            Interaction::Yield => {
                onset.is_some() && ego_pass.is_some_and(|e| hero_pass.is_none_or(|h| h > e))
            }
            Interaction::NoYield => {
                let stopped = self.stop_time(self.frames[0].time).is_some_and(|t| hero_pass.is_none_or(|h| t < h));
                hero_pass.is_some_and(|h| ego_pass.is_none_or(|e| e > h)) && !stopped
            }
            Interaction::StopAndGo => match self.stop_time(self.frames[0].time) {
                None => false,
                Some(stop) => {
                    let goes = self.frames.iter().any(|f| f.time > stop && f.actors[hero].v >= GO_SPEED_MPS);
                    goes && hero_pass.is_some_and(|h| h > stop)
                }
            },
            Interaction::HardBrakeToStop => match self.stop_time(self.frames[0].time) {
                None => false,
                Some(stop) => self
                    .frames
                    .iter()
                    .take_while(|f| f.time <= stop + 1e-9)
                    .any(|f| f.actors[hero].a <= -HARD_BRAKE_MPSS),
            },
            Interaction::DecelerateToStopAtPoint => onset.is_some_and(|t| self.stop_time(t).is_some()),
        })
    }

    fn anchor_time(&self, anchor: &Anchor, onset: Option<f64>) -> Result<Option<f64>, EvalError> {
        Ok(match anchor {
            Anchor::Onset => onset,
            Anchor::Stop => self.stop_time(self.frames[0].time),
            Anchor::Arrival(name) => {
                let l = Landmark::parse(name).ok_or_else(|| EvalError::UnknownLandmark(name.clone()))?;
                let s = self.locate(self.hero, l)?;
                self.passage(self.hero, s)
            }
        })
    }

    /// Resolves every landmark a trigger refers to, whether or not its anchor occurs.
    fn check_references(&self, spec: &TriggerSpec) -> Result<(), EvalError> {
        self.path(spec.actor)?;
        match spec.quantity {
            QuantityKind::GapToActor => {
                let other = spec.other.ok_or_else(|| EvalError::IncompleteTrigger(spec.label(), "other"))?;
                self.locate(spec.actor, Landmark::ConflictPoint)?;
                self.locate(other, Landmark::ConflictPoint)?;
            }
            _ => {
                self.locate(spec.actor, spec.landmark()?)?;
            }
        }
        if let Anchor::Arrival(name) = &spec.anchor {
            let l = Landmark::parse(name).ok_or_else(|| EvalError::UnknownLandmark(name.clone()))?;
            self.locate(self.hero, l)?;
        }
        Ok(())
    }

    fn measure(&self, spec: &TriggerSpec, t: f64) -> Result<Option<f64>, EvalError> {
        let s = |actor| value_at(self.frames, self.arclength(actor), t);
        Ok(match spec.quantity {
            QuantityKind::DistanceToLandmark => Some(self.locate(spec.actor, spec.landmark()?)? - s(spec.actor)),
            QuantityKind::GapToActor => {
                let other = spec.other.ok_or_else(|| EvalError::IncompleteTrigger(spec.label(), "other"))?;
                let a = s(spec.actor) - self.locate(spec.actor, Landmark::ConflictPoint)?;
                let b = s(other) - self.locate(other, Landmark::ConflictPoint)?;
                Some(a - b)
            }
            QuantityKind::TimeToArrival => {
                let remaining = self.locate(spec.actor, spec.landmark()?)? - s(spec.actor);
                let v = value_at(self.frames, self.speed(spec.actor), t);
                (v > STOP_SPEED_MPS).then(|| remaining / v)
            }
        })
    }
}

fn resolve(target: &Target, bindings: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    match target {
        Target::Value(v) => Ok(*v),
        Target::Parameter(name) => bindings.get(name).copied().ok_or_else(|| EvalError::UnboundParameter(name.clone())),
    }
}

/// Checks `trace` against `criteria`. `paths` is indexed by actor id and must
/// carry the conflict landmarks registered when the scenario was set up.
pub fn evaluate(
    trace: &Trace,
    paths: &[RoutePath],
    criteria: &SuccessCriteria,
    bindings: &BTreeMap<String, f64>,
    levels: &[Tolerance],
) -> Result<SuccessReport, EvalError> {
    validate_tolerances(levels)?;
    if trace.frames.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    let cx = Context { frames: &trace.frames, paths, hero: criteria.hero };
    cx.path(criteria.hero)?;

    let routes = criteria.routes.iter().map(|(&actor, route)| cx.route(actor, route)).collect::<Result<Vec<_>, _>>()?;
    let route_ok = routes.iter().all(|r| r.ok);

    let onset_time = interaction_onset(trace, criteria.hero, criteria.interaction).map(|k| trace.frames[k].time);
    let interaction_ok = cx.interaction(criteria.interaction, onset_time)?;

    let mut triggers = Vec::with_capacity(criteria.triggers.len());
    for spec in &criteria.triggers {
        cx.check_references(spec)?;
        let target = resolve(&spec.target, bindings)?;
        let time = cx.anchor_time(&spec.anchor, onset_time)?;
        let measured = match time {
            Some(t) => cx.measure(spec, t)?,
            None => None,
        };
        let residual = measured.map(|m| m - target);
        let unit = spec.unit();
        let ok = levels.iter().map(|l| residual.is_some_and(|r| r.abs() <= l.for_unit(unit))).collect();
        triggers.push(TriggerResult { label: spec.label(), unit, target, time, measured, residual, ok });
    }

    let levels = levels
        .iter()
        .enumerate()
        .map(|(i, &tolerance)| {
            let trigger_ok = triggers.iter().all(|t| t.ok[i]);
            LevelResult { tolerance, trigger_ok, overall: route_ok && interaction_ok && trigger_ok }
        })
        .collect();
    Ok(SuccessReport { routes, route_ok, interaction: criteria.interaction, interaction_ok, onset_time, triggers, levels })
}
