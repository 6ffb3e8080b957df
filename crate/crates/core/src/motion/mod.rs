//! Piecewise-polynomial longitudinal motion profiles.
//!
//! A profile is a sequence of knots `t0 … tK` delimiting `K` pieces. Each piece
//! carries one free rate at its own [`Order`]; lower orders are inherited from
//! the state reached at the end of the previous piece, higher orders are zero.

mod concrete;
mod profile;

pub use concrete::{ConcreteError, ConcretePiece, ConcreteProfile, ContinuityJump, Sample};
pub use profile::{MotionProfile, Piece, PieceKind, PieceSpec, ProfileError};

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Rational};

/// Derivative order that a piece's free rate controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Order {
    Position = 0,
    Velocity = 1,
    Acceleration = 2,
}

impl Order {
    pub const ALL: [Order; 3] = [Order::Position, Order::Velocity, Order::Acceleration];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Order> {
        Order::ALL.get(index).copied()
    }

    /// One order higher, saturating at acceleration.
    pub fn lifted(self) -> Order {
        Order::from_index(self.index() + 1).unwrap_or(Order::Acceleration)
    }

    pub fn letter(self) -> char {
        match self {
            Order::Position => 'x',
            Order::Velocity => 'v',
            Order::Acceleration => 'a',
        }
    }
}

/// An integrand `expr` with respect to `var`, tagged with how many times it
/// has already been integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub expr: Expr,
    pub var: Expr,
    pub order: u8,
}

impl Term {
    pub fn new(expr: Expr, var: Expr, order: u8) -> Self {
        Self { expr, var, order }
    }
}

/// Integrates a term once: `max(1, o) / (o + 1) · expr · var`.
///
/// The coefficient reproduces the factorial factor `1/(o+1)!` relative to the
/// original integrand only for `o ∈ {0, 1}`. Profiles never integrate more
/// than twice (orders are capped at acceleration), so larger inputs are
/// rejected instead of silently producing a wrong coefficient.
pub fn antiderivative(term: &Term) -> Result<Term, ProfileError> {
    if term.order > 1 {
        return Err(ProfileError::AntiderivativeDomain(term.order));
    }
    let o = i64::from(term.order);
    let coefficient = Rational::new(o.max(1).into(), (o + 1).into());
    Ok(Term {
        expr: Expr::product([Expr::Const(coefficient), term.expr.clone(), term.var.clone()]),
        var: term.var.clone(),
        order: term.order + 1,
    })
}
