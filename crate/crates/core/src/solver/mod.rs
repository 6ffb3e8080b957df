//! SMT encoding of lowered constraints, solver sessions, exact model
//! re-checking and the tolerance ladder.

mod sexpr;
mod z3;

pub use sexpr::{parse_all, value_of, Sexp, Value};
pub use z3::{SmtProcess, SOLVER_ENV};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ConstraintKind, ConstraintSet, LoweredConstraint};
use crate::expr::{rational_from_f64, rational_to_f64, smt_symbol, write_smt_rational, Cond, Expr, Rational, Rel};
use crate::motion::MotionProfile;

/// Equality slacks tried in order, meters.
pub const DEFAULT_LADDER: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(10);
/// Slack factor for equalities that are not distance-valued.
pub const NON_DISTANCE_SCALE: f64 = 0.1;

/// Rounds of fixing approximate model values and re-solving.
const MAX_REPINS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver transport failure: {0}")]
    Transport(String),
    #[error("constraint `{label}` uses undeclared symbol `{symbol}`")]
    Undeclared { symbol: String, label: String },
    #[error("invalid tolerance ladder: {0}")]
    InvalidLadder(String),
    #[error("no solution up to tolerance {max_tolerance} ({})", describe_attempts(.attempts))]
    LadderExhausted { max_tolerance: f64, attempts: Vec<Attempt> },
}

fn describe_attempts(attempts: &[Attempt]) -> String {
    attempts.iter().map(|a| format!("{}: {}", a.tolerance, a.status)).collect::<Vec<_>>().join(", ")
}

/// One solver variable; durations carry a lower bound of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: Option<Rational>,
}

/// A satisfiability query at one tolerance.
#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub variables: Vec<Variable>,
    pub constraints: Vec<LoweredConstraint>,
    /// Soft assertions, most important first. Trailing ones are dropped
    /// until the query succeeds.
    pub preferences: Vec<Cond>,
    pub timeout: Duration,
    /// Equality slack in meters.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Sat,
    Unsat,
    Timeout,
    /// Solver gave up, or its model could not be confirmed exactly.
    Unknown,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Sat => "sat",
            SolveStatus::Unsat => "unsat",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub tolerance: f64,
    pub status: SolveStatus,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub wall_time_s: f64,
    pub tolerance: f64,
    pub assertions: usize,
    /// Number of preference tiers the model honours.
    pub preferences_applied: usize,
    /// Rounds spent replacing algebraic values by rationals.
    pub repins: usize,
    pub attempts: Vec<Attempt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Present iff `status` is sat.
    pub model: Option<BTreeMap<String, Rational>>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    pub fn is_sat(&self) -> bool {
        self.status == SolveStatus::Sat
    }

    pub fn model_f64(&self) -> BTreeMap<String, f64> {
        self.model.iter().flatten().map(|(k, v)| (k.clone(), rational_to_f64(v))).collect()
    }
}

/// What a backend returns for one query.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Sat(BTreeMap<String, Value>),
    Unsat,
    Timeout,
    Unknown(String),
}

/// Seam between the encoding and a concrete solver.
pub trait Backend: Send + Sync {
    fn name(&self) -> String;
    /// Checks an SMT-LIB 2 script holding declarations and assertions only.
    fn check(&self, script: &str, timeout: Duration) -> Result<Answer, SolverError>;
}

/// Declares the profiles' variables and checks that the constraints use no others.
pub fn encode(constraints: &ConstraintSet, profiles: &[MotionProfile]) -> Result<SolveRequest, SolverError> {
    let mut declared = BTreeSet::new();
    let mut durations = BTreeSet::new();
    for p in profiles {
        declared.extend(p.variables());
        durations.extend(p.duration_variables());
    }
    for c in constraints.iter() {
        let mut used = BTreeSet::new();
        c.collect_vars(&mut used);
        if let Some(symbol) = used.difference(&declared).next() {
            return Err(SolverError::Undeclared { symbol: symbol.clone(), label: c.label.clone() });
        }
    }
    let variables = declared
        .into_iter()
        .map(|name| {
            let lower = durations.contains(&name).then(Rational::default);
            Variable { name, lower }
        })
        .collect();
    Ok(SolveRequest {
        variables,
        constraints: constraints.constraints.clone(),
        preferences: Vec::new(),
        timeout: DEFAULT_STEP_TIMEOUT,
        tolerance: 0.0,
    })
}

impl SolveRequest {
    pub fn with_tolerance(&self, tolerance: f64) -> SolveRequest {
        SolveRequest { tolerance, ..self.clone() }
    }

    /// Slack granted to constraint `c` at this request's tolerance.
    pub fn slack(&self, c: &LoweredConstraint) -> Rational {
        let t = rational_from_f64(self.tolerance);
        if c.distance_valued {
            t
        } else {
            t * rational_from_f64(NON_DISTANCE_SCALE)
        }
    }

    /// Labelled assertions at this request's tolerance, in constraint order.
    pub fn assertions(&self) -> Vec<(String, Cond)> {
        let mut out = Vec::new();
        for v in &self.variables {
            if let Some(lo) = &v.lower {
                out.push((format!("{} lower bound", v.name), Cond::cmp(Rel::Ge, Expr::var(&v.name), Expr::Const(lo.clone()))));
            }
        }
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Relation { lhs, rel: Rel::Eq, rhs } if self.tolerance > 0.0 => {
                    let slack = Expr::Const(self.slack(c));
                    let diff = lhs.clone().sub(rhs.clone());
                    out.push((format!("{} (upper)", c.label), Cond::cmp(Rel::Le, diff, slack.clone())));
                    let back = rhs.clone().sub(lhs.clone());
                    out.push((format!("{} (lower)", c.label), Cond::cmp(Rel::Le, back, slack)));
                }
                ConstraintKind::Relation { lhs, rel, rhs } => {
                    out.push((c.label.clone(), Cond::cmp(*rel, lhs.clone(), rhs.clone())));
                }
                ConstraintKind::Range { exprs, lo, hi } => {
                    let parts = exprs
                        .iter()
                        .flat_map(|e| [Cond::cmp(Rel::Ge, e.clone(), lo.clone()), Cond::cmp(Rel::Le, e.clone(), hi.clone())])
                        .collect();
                    out.push((c.label.clone(), Cond::and(parts)));
                }
            }
        }
        out
    }

    /// SMT-LIB 2 text: options, declarations, assertions and `extra`.
    pub fn script(&self, extra: &[Cond]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "(set-option :timeout {})", self.timeout.as_millis());
        out.push_str("(set-logic QF_NRA)\n");
        for v in &self.variables {
            let _ = writeln!(out, "(declare-fun {} () Real)", smt_symbol(&v.name));
        }
        for (label, cond) in self.assertions() {
            let _ = writeln!(out, "; {label}");
            out.push_str("(assert ");
            cond.write_smt(&mut out);
            out.push_str(")\n");
        }
        for cond in extra {
            out.push_str("(assert ");
            cond.write_smt(&mut out);
            out.push_str(")\n");
        }
        out
    }

    /// Label of the first assertion the model violates, if any.
    pub fn check_model(&self, model: &BTreeMap<String, Rational>) -> Option<String> {
        self.assertions().into_iter().find(|(_, cond)| cond.eval_exact(model) != Ok(true)).map(|(label, _)| label)
    }
}

/// Status, exact model and an optional diagnostic note.
type Run = (SolveStatus, Option<BTreeMap<String, Rational>>, Option<String>);

fn pin(name: &str, value: &Rational) -> Cond {
    Cond::cmp(Rel::Eq, Expr::var(name), Expr::Const(value.clone()))
}

/// One query, replacing approximate values by rational pins until the
/// model is exact.
fn run(
    backend: &dyn Backend,
    request: &SolveRequest,
    extra: &[Cond],
    deadline: Instant,
    repins: &mut usize,
) -> Result<Run, SolverError> {
    let mut pins: BTreeMap<String, Rational> = BTreeMap::new();
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Ok((SolveStatus::Timeout, None, None));
        }
        let mut conds = extra.to_vec();
        conds.extend(pins.iter().map(|(k, v)| pin(k, v)));
        let script = SolveRequest { timeout: remaining, ..request.clone() }.script(&conds);
        let values = match backend.check(&script, remaining)? {
            Answer::Sat(values) => values,
            Answer::Unsat if pins.is_empty() => return Ok((SolveStatus::Unsat, None, None)),
            Answer::Unsat => {
                return Ok((SolveStatus::Unknown, None, Some("no rational model near the algebraic one".into())))
            }
            Answer::Timeout => return Ok((SolveStatus::Timeout, None, None)),
            Answer::Unknown(reason) => return Ok((SolveStatus::Unknown, None, Some(reason))),
        };
        let mut model = BTreeMap::new();
        let mut approx = Vec::new();
        for v in &request.variables {
            match values.get(&v.name) {
                // Unconstrained variables may be left out of the model.
                None => {
                    model.insert(v.name.clone(), Rational::default());
                }
                Some(Value::Exact(x)) => {
                    model.insert(v.name.clone(), x.clone());
                }
                Some(Value::Approx(x)) => approx.push((v.name.clone(), x.clone())),
                Some(Value::Irrational) => {
                    return Ok((SolveStatus::Unknown, None, Some(format!("no decimal value for `{}`", v.name))))
                }
            }
        }
        if approx.is_empty() {
            return Ok(match request.check_model(&model) {
                None => (SolveStatus::Sat, Some(model), None),
                Some(label) => (SolveStatus::Unknown, None, Some(format!("model fails exact re-check of `{label}`"))),
            });
        }
        if *repins >= MAX_REPINS {
            return Ok((SolveStatus::Unknown, None, Some("model stayed algebraic".into())));
        }
        *repins += 1;
        // Fix the first approximate value and let the rest follow.
        let (name, value) = approx.swap_remove(0);
        pins.insert(name, value);
    }
}

/// Solves one request; a sat result has passed the exact re-check.
pub fn solve(backend: &dyn Backend, request: &SolveRequest) -> Result<SolveOutcome, SolverError> {
    let start = Instant::now();
    let deadline = start + request.timeout;
    let mut repins = 0;
    let mut stats = SolveStats { tolerance: request.tolerance, assertions: request.assertions().len(), ..Default::default() };
    // All preferences together first. Failing that, add them one tier at a
    // time in priority order, keeping each tier that stays consistent.
    // Every attempt gets half of what is left; the last word is the hard problem.
    let half = || {
        let now = Instant::now();
        now + deadline.saturating_duration_since(now) / 2
    };
    let mut best: Option<(Run, usize)> = None;
    if !request.preferences.is_empty() {
        let all = run(backend, request, &request.preferences, half(), &mut repins)?;
        if all.0 == SolveStatus::Sat {
            best = Some((all, request.preferences.len()));
        } else if request.preferences.len() > 1 {
            let mut chosen: Vec<Cond> = Vec::new();
            for tier in &request.preferences {
                chosen.push(tier.clone());
                let attempt = run(backend, request, &chosen, half(), &mut repins)?;
                if attempt.0 == SolveStatus::Sat {
                    best = Some((attempt, chosen.len()));
                } else {
                    chosen.pop();
                }
            }
        }
    }
    let ((status, model, note), applied) = match best {
        Some(found) => found,
        None => (run(backend, request, &[], deadline, &mut repins)?, 0),
    };
    stats.preferences_applied = applied;
    stats.repins = repins;
    stats.note = note;
    stats.wall_time_s = start.elapsed().as_secs_f64();
    Ok(SolveOutcome { status, model, stats })
}

/// Tries each tolerance in turn and returns the first sat outcome.
pub fn solve_with_ladder(
    backend: &dyn Backend,
    request: &SolveRequest,
    ladder: &[f64],
    per_step_timeout: Duration,
) -> Result<SolveOutcome, SolverError> {
    if ladder.is_empty() {
        return Err(SolverError::InvalidLadder("empty".into()));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) || ladder[0] < 0.0 {
        return Err(SolverError::InvalidLadder(format!("{ladder:?} is not ascending and non-negative")));
    }
    let mut attempts = Vec::new();
    let start = Instant::now();
    for &tolerance in ladder {
        let step = SolveRequest { timeout: per_step_timeout, tolerance, ..request.clone() };
        let mut outcome = solve(backend, &step)?;
        attempts.push(Attempt { tolerance, status: outcome.status, wall_time_s: outcome.stats.wall_time_s });
        if outcome.is_sat() {
            outcome.stats.attempts = attempts;
            outcome.stats.wall_time_s = start.elapsed().as_secs_f64();
            return Ok(outcome);
        }
    }
    Err(SolverError::LadderExhausted { max_tolerance: *ladder.last().unwrap(), attempts })
}

/// Writes a model as SMT-LIB constants, sorted by name.
pub fn format_model(model: &BTreeMap<String, Rational>) -> String {
    let mut out = String::new();
    for (k, v) in model {
        let _ = write!(out, "{} = ", k);
        write_smt_rational(v, &mut out);
        out.push('\n');
    }
    out
}
