use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{antiderivative, ConcreteError, ConcreteProfile, Order, Term};
use crate::expr::{Cond, Expr, Rational, Rel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("antiderivative is only exact for term orders 0 and 1, got {0}")]
    AntiderivativeDomain(u8),
    #[error("unknown knot `{0}`")]
    UnknownKnot(String),
    #[error("unknown piece `{0}`")]
    UnknownPiece(String),
    #[error("piece reference `{reference}` is ambiguous: {candidates:?}")]
    AmbiguousPiece { reference: String, candidates: Vec<String> },
    #[error("profile needs exactly one more knot than pieces ({knots} knots, {pieces} pieces)")]
    Shape { knots: usize, pieces: usize },
    #[error("profile has no pieces")]
    Empty,
    #[error("duplicate knot name `{0}`")]
    DuplicateKnot(String),
    #[error("duplicate piece name `{0}`")]
    DuplicatePiece(String),
}

/// Vocabulary of piece base names used by scenario programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Go,
    Acc,
    Dec,
    Stop,
}

impl PieceKind {
    pub fn parse(name: &str) -> Option<PieceKind> {
        match name {
            "go" => Some(PieceKind::Go),
            "acc" => Some(PieceKind::Acc),
            "dec" => Some(PieceKind::Dec),
            "stop" => Some(PieceKind::Stop),
            _ => None,
        }
    }

    pub fn base_name(self) -> &'static str {
        match self {
            PieceKind::Go => "go",
            PieceKind::Acc => "acc",
            PieceKind::Dec => "dec",
            PieceKind::Stop => "stop",
        }
    }

    pub fn default_order(self) -> Order {
        match self {
            PieceKind::Go => Order::Velocity,
            PieceKind::Acc | PieceKind::Dec => Order::Acceleration,
            PieceKind::Stop => Order::Position,
        }
    }
}

impl fmt::Display for PieceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base_name())
    }
}

/// One polynomial segment of a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub name: String,
    pub kind: PieceKind,
    pub order: Order,
    pub duration: Expr,
    /// Own rates indexed by order. Entries above `order` are zero; for every
    /// piece but the first, entries below `order` are zero too and the carried
    /// state is added at evaluation time. A non-initial stop piece holds the
    /// carried position as its own position rate.
    pub rates: [Expr; 3],
}

impl Piece {
    /// State of the given order at local time `t`, with lower-order rates merged
    /// from `carried` (the state at the piece's start) when present.
    pub fn state(&self, t: &Expr, carried: Option<&[Expr; 3]>, order: Order) -> Expr {
        let top = self.order.index();
        let merged: Vec<Expr> = match carried {
            Some(carry) => (0..=top)
                .map(|k| {
                    if k < top {
                        self.rates[k].clone().add(carry[k].clone())
                    } else {
                        self.rates[k].clone()
                    }
                })
                .collect(),
            None => self.rates[..=top].to_vec(),
        };
        let o = order.index();
        Expr::sum((o..=top).map(|k| {
            let power = (k - o) as u32;
            let coefficient = Rational::new(1.into(), factorial(power).into());
            Expr::product([Expr::Const(coefficient), merged[k].clone(), t.clone().pow(power)])
        }))
    }

    /// Rates carried into the next piece: the full state at the end of this one.
    pub fn end_state(&self, carried: Option<&[Expr; 3]>) -> [Expr; 3] {
        Order::ALL.map(|o| self.state(&self.duration, carried, o))
    }
}

fn factorial(n: u32) -> i64 {
    (1..=i64::from(n)).product()
}

/// Name, kind and order of a piece before its variables are created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub name: String,
    pub kind: PieceKind,
    pub order: Order,
}

/// Symbolic motion profile of one actor.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    pub actor_id: usize,
    pub knots: Vec<String>,
    pub pieces: Vec<Piece>,
    pub initial_position: Expr,
}

impl MotionProfile {
    /// Creates a profile whose free variables are prefixed `a{actor_id}_`.
    pub fn build(actor_id: usize, knots: Vec<String>, specs: &[PieceSpec]) -> Result<Self, ProfileError> {
        Self::build_with_prefix(actor_id, &format!("a{actor_id}_"), knots, specs)
    }

    pub fn build_with_prefix(
        actor_id: usize,
        prefix: &str,
        knots: Vec<String>,
        specs: &[PieceSpec],
    ) -> Result<Self, ProfileError> {
        if specs.is_empty() {
            return Err(ProfileError::Empty);
        }
        if knots.len() != specs.len() + 1 {
            return Err(ProfileError::Shape { knots: knots.len(), pieces: specs.len() });
        }
        let mut seen = BTreeSet::new();
        for knot in &knots {
            if !seen.insert(knot.as_str()) {
                return Err(ProfileError::DuplicateKnot(knot.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for spec in specs {
            if !seen.insert(spec.name.as_str()) {
                return Err(ProfileError::DuplicatePiece(spec.name.clone()));
            }
        }

        let initial_position = Expr::var(&format!("{prefix}x0"));
        let mut profile = MotionProfile { actor_id, knots, pieces: Vec::with_capacity(specs.len()), initial_position };
        for (k, spec) in specs.iter().enumerate() {
            let mut rates = [Expr::zero(), Expr::zero(), Expr::zero()];
            let top = spec.order.index();
            if top > 0 {
                rates[top] = Expr::var(&format!("{prefix}{}_{}", spec.name, spec.order.letter()));
            }
            if k == 0 {
                rates[0] = profile.initial_position.clone();
                if spec.order == Order::Acceleration {
                    rates[1] = Expr::var(&format!("{prefix}v0"));
                }
            } else if spec.order == Order::Position {
                rates[0] = profile.state_at_knot_index(k, Order::Position);
            }
            profile.pieces.push(Piece {
                name: spec.name.clone(),
                kind: spec.kind,
                order: spec.order,
                duration: Expr::var(&format!("{prefix}{}_d", spec.name)),
                rates,
            });
        }
        Ok(profile)
    }

    pub fn specs(&self) -> Vec<PieceSpec> {
        self.pieces
            .iter()
            .map(|p| PieceSpec { name: p.name.clone(), kind: p.kind, order: p.order })
            .collect()
    }

    pub fn knot_index(&self, knot: &str) -> Result<usize, ProfileError> {
        self.knots
            .iter()
            .position(|k| k == knot)
            .ok_or_else(|| ProfileError::UnknownKnot(knot.to_string()))
    }

    /// Resolves a piece by its full name, or by base name when unambiguous.
    pub fn piece_index(&self, reference: &str) -> Result<usize, ProfileError> {
        if let Some(i) = self.pieces.iter().position(|p| p.name == reference) {
            return Ok(i);
        }
        let candidates: Vec<usize> =
            (0..self.pieces.len()).filter(|&i| self.pieces[i].kind.base_name() == reference).collect();
        match candidates.as_slice() {
            [single] => Ok(*single),
            [] => Err(ProfileError::UnknownPiece(reference.to_string())),
            many => Err(ProfileError::AmbiguousPiece {
                reference: reference.to_string(),
                candidates: many.iter().map(|&i| self.pieces[i].name.clone()).collect(),
            }),
        }
    }

    /// Closed-form state at a named knot.
    pub fn state_at_knot(&self, knot: &str, order: Order) -> Result<Expr, ProfileError> {
        Ok(self.state_at_knot_index(self.knot_index(knot)?, order))
    }

    /// State at knot `j`: the start of the first piece for `j = 0`, otherwise
    /// the end of piece `j − 1`, obtained by integrating that piece from its own
    /// order down to `order` and chaining lower orders from knot `j − 1`.
    pub fn state_at_knot_index(&self, j: usize, order: Order) -> Expr {
        if j == 0 {
            let first = &self.pieces[0];
            return if order <= first.order { first.rates[order.index()].clone() } else { Expr::zero() };
        }
        let piece = &self.pieces[j - 1];
        let mut terms: Vec<Term> = Vec::new();
        let mut current = piece.order.index() as isize;
        while current >= order.index() as isize {
            let level = current as usize;
            // Bounded by the loop: at most two integrations, both from orders 0 or 1.
            terms = terms.iter().map(|t| antiderivative(t).expect("integration depth ≤ 2")).collect();
            let expr = if level == piece.order.index() {
                piece.rates[level].clone()
            } else {
                self.state_at_knot_index(j - 1, Order::from_index(level).expect("level ≤ 2"))
            };
            terms.push(Term::new(expr, piece.duration.clone(), 0));
            current -= 1;
        }
        Expr::sum(terms.into_iter().map(|t| t.expr))
    }

    /// Full state `[x, v, a]` at knot `j`.
    pub fn knot_state(&self, j: usize) -> [Expr; 3] {
        Order::ALL.map(|o| self.state_at_knot_index(j, o))
    }

    /// Nested conditional expression for the state at time `t` (piece-local
    /// intervals `[lo, hi)`; the final piece extrapolates past its end).
    pub fn state_at_time(&self, t: &Expr, order: Order) -> Expr {
        let mut carried: [Expr; 3] = [Expr::zero(), Expr::zero(), Expr::zero()];
        let mut lo = Expr::zero();
        let last = self.pieces.len() - 1;
        let mut branches = Vec::with_capacity(self.pieces.len());
        for (k, piece) in self.pieces.iter().enumerate() {
            let hi = lo.clone().add(piece.duration.clone());
            let cond = if k == last {
                Cond::cmp(Rel::Ge, t.clone(), lo.clone())
            } else {
                Cond::and(vec![Cond::cmp(Rel::Ge, t.clone(), lo.clone()), Cond::cmp(Rel::Lt, t.clone(), hi.clone())])
            };
            let local = t.clone().sub(lo.clone());
            branches.push((cond, piece.state(&local, Some(&carried), order)));
            carried = piece.end_state(Some(&carried));
            lo = hi;
        }
        let mut acc = carried[order.index()].clone();
        for (cond, then) in branches.into_iter().rev() {
            acc = Expr::ite(cond, then, acc);
        }
        acc
    }

    pub fn state_at_concrete(&self, t: f64, order: Order) -> Expr {
        self.state_at_time(&Expr::num(t), order)
    }

    /// Sum of the durations of the pieces before `knot`.
    pub fn duration_to_knot(&self, knot: &str) -> Result<Expr, ProfileError> {
        Ok(self.duration_to_index(self.knot_index(knot)?))
    }

    pub fn duration_to_index(&self, j: usize) -> Expr {
        Expr::sum(self.pieces[..j].iter().map(|p| p.duration.clone()))
    }

    pub fn total_duration(&self) -> Expr {
        self.duration_to_index(self.pieces.len())
    }

    /// Rate of the given order belonging to a piece: its own free rate at the
    /// piece order, zero above, and the state at the piece start below.
    pub fn piece_rate(&self, index: usize, order: Order) -> Expr {
        let piece = &self.pieces[index];
        if index == 0 {
            piece.state(&Expr::zero(), None, order)
        } else {
            let carried = self.knot_state(index);
            piece.state(&Expr::zero(), Some(&carried), order)
        }
    }

    /// Free variables in declaration order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |e: &Expr| {
            if let Expr::Var(name) = e {
                if seen.insert(name.to_string()) {
                    out.push(name.to_string());
                }
            }
        };
        push(&self.initial_position);
        for piece in &self.pieces {
            for rate in &piece.rates {
                push(rate);
            }
            push(&piece.duration);
        }
        out
    }

    pub fn duration_variables(&self) -> Vec<String> {
        self.pieces.iter().filter_map(|p| if let Expr::Var(n) = &p.duration { Some(n.to_string()) } else { None }).collect()
    }

    /// Binds every free variable, producing a numeric profile.
    pub fn instantiate(&self, assignment: &BTreeMap<String, f64>) -> Result<ConcreteProfile, ConcreteError> {
        ConcreteProfile::from_symbolic(self, assignment)
    }

    pub fn instantiate_exact(&self, assignment: &BTreeMap<String, Rational>) -> Result<ConcreteProfile, ConcreteError> {
        let floats = assignment.iter().map(|(k, v)| (k.clone(), crate::expr::rational_to_f64(v))).collect();
        ConcreteProfile::from_symbolic(self, &floats)
    }
}
