use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use super::{AstExpr, BinOp, ConstraintAst, ScenarioProgram};
use crate::expr::Rational;

/// Renders a rational with a terminating decimal expansion; others fall back
/// to a parenthesized quotient.
pub(super) fn decimal(value: &Rational) -> String {
    if value.is_integer() {
        return value.to_integer().to_string();
    }
    let mut denom = value.denom().clone();
    let mut digits = 0usize;
    let ten = BigInt::from(10);
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let mut scale = BigInt::from(1);
    while (&denom % &two).is_zero() || (&denom % &five).is_zero() {
        if (&denom % &two).is_zero() {
            denom /= &two;
        }
        if (&denom % &five).is_zero() {
            denom /= &five;
        }
        digits += 1;
        scale *= &ten;
    }
    if denom != BigInt::from(1) {
        return format!("({} / {})", value.numer(), value.denom());
    }
    // Enough digits for exactness: the loop above bounds the decimal length.
    let scaled = (value * Rational::from_integer(scale.clone())).to_integer();
    let sign = if scaled.is_negative() { "-" } else { "" };
    let abs = scaled.abs().to_string();
    let padded = format!("{:0>width$}", abs, width = digits + 1);
    let (int, frac) = padded.split_at(padded.len() - digits);
    let frac = frac.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

fn expr_prec(e: &AstExpr, min: u8) -> String {
    let (text, prec) = match e {
        AstExpr::Num(v) => (decimal(v), 3),
        AstExpr::Param(p) => (p.clone(), 3),
        AstExpr::Landmark(l) => (l.name().to_string(), 3),
        AstExpr::Access(a) => (format!("A{}{}({})", a.actor, a.kind.letter(), a.target.name()), 3),
        AstExpr::Neg(inner) => (format!("-{}", expr_prec(inner, 3)), 3),
        AstExpr::JustBefore(inner) => (format!("just_before({})", expr_prec(inner, 0)), 3),
        AstExpr::Bin(op, a, b) => match op {
            BinOp::Add => (format!("{} + {}", expr_prec(a, 1), expr_prec(b, 2)), 1),
            BinOp::Sub => (format!("{} - {}", expr_prec(a, 1), expr_prec(b, 2)), 1),
            BinOp::Mul => (format!("{} * {}", expr_prec(a, 2), expr_prec(b, 3)), 2),
        },
    };
    if prec < min {
        format!("({text})")
    } else {
        text
    }
}

pub(super) fn expr(e: &AstExpr) -> String {
    expr_prec(e, 0)
}

pub(super) fn constraint(c: &ConstraintAst) -> String {
    format!("{} {} {}", expr(&c.lhs), c.rel, expr(&c.rhs))
}

pub(super) fn program(p: &ScenarioProgram) -> String {
    let mut out = String::new();
    for actor in &p.actors {
        out.push_str(&format!("Actor {}:\n", actor.id));
        let route: Vec<String> = actor.route.iter().map(|h| h.to_string()).collect();
        out.push_str(&format!("- {}\n", route.join(", ")));
        let mut items = vec![actor.knots[0].clone()];
        for (piece, knot) in actor.pieces.iter().zip(&actor.knots[1..]) {
            items.push(piece.base_name().to_string());
            items.push(knot.clone());
        }
        out.push_str(&format!("- [{}]\n", items.join(", ")));
    }
    out.push_str("\nConstraints:\n");
    for c in &p.constraints {
        out.push_str(&constraint(c));
        out.push('\n');
    }
    out
}
