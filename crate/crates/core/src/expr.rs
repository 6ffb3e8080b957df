//! Symbolic real-valued expressions over named variables.
//!
//! Expressions are built through folding constructors so that constant
//! sub-terms collapse eagerly. They evaluate either in floating point or
//! exactly over big rationals, and print as SMT-LIB 2 terms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// Comparison relation between two expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Rel {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "==",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    fn smt(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    pub fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Rel::Eq => lhs == rhs,
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Gt => lhs > rhs,
            Rel::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Rational),
    Var(Arc<str>),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Ite(Box<Cond>, Box<Expr>, Box<Expr>),
}

/// Boolean guard used by `Expr::Ite` and by solver assertions.
#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(Rel, Expr, Expr),
    And(Vec<Cond>),
}

/// Converts a float to the rational its shortest decimal rendering denotes,
/// so `0.1` becomes exactly 1/10 rather than its binary expansion.
pub fn rational_from_f64(value: f64) -> Rational {
    assert!(value.is_finite(), "non-finite constant {value}");
    parse_decimal(&format!("{value}")).expect("float formatting is a valid decimal")
}

/// Parses `[-]digits[.digits][e[-]digits]` into an exact rational.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        value = -value;
    }
    Some(value)
}

pub fn rational_to_f64(value: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (value.numer().to_f64(), value.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Large operands: scale down before dividing.
    let bits = value.numer().bits().max(value.denom().bits()) as i64;
    let shift = (bits - 900).max(0) as usize;
    let n = (value.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (value.denom() >> shift).to_f64().unwrap_or(1.0);
    n / d
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Rational::zero())
    }

    pub fn one() -> Expr {
        Expr::Const(Rational::one())
    }

    pub fn num(value: f64) -> Expr {
        Expr::Const(rational_from_f64(value))
    }

    pub fn int(value: i64) -> Expr {
        Expr::Const(Rational::from_integer(value.into()))
    }

    pub fn ratio(numer: i64, denom: i64) -> Expr {
        Expr::Const(Rational::new(numer.into(), denom.into()))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(Arc::from(name))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(Zero::is_zero)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut constant = Rational::zero();
        let mut rest = Vec::new();
        for term in terms {
            match term {
                Expr::Const(c) => constant += c,
                Expr::Add(inner) => {
                    for t in inner {
                        match t {
                            Expr::Const(c) => constant += c,
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if !constant.is_zero() {
            rest.push(Expr::Const(constant));
        }
        match rest.len() {
            0 => Expr::zero(),
            1 => rest.pop().unwrap(),
            _ => Expr::Add(rest),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut constant = Rational::one();
        let mut rest = Vec::new();
        for factor in factors {
            match factor {
                Expr::Const(c) => constant *= c,
                Expr::Mul(inner) => {
                    for f in inner {
                        match f {
                            Expr::Const(c) => constant *= c,
                            other => rest.push(other),
                        }
                    }
                }
                other => rest.push(other),
            }
        }
        if constant.is_zero() {
            return Expr::zero();
        }
        if rest.is_empty() {
            return Expr::Const(constant);
        }
        if !constant.is_one() {
            rest.insert(0, Expr::Const(constant));
        }
        if rest.len() == 1 {
            rest.pop().unwrap()
        } else {
            Expr::Mul(rest)
        }
    }

    pub fn add(self, other: Expr) -> Expr {
        Expr::sum([self, other])
    }

    pub fn sub(self, other: Expr) -> Expr {
        Expr::sum([self, other.neg()])
    }

    pub fn mul(self, other: Expr) -> Expr {
        Expr::product([self, other])
    }

    pub fn neg(self) -> Expr {
        Expr::product([Expr::int(-1), self])
    }

    pub fn scale(self, factor: Rational) -> Expr {
        Expr::product([Expr::Const(factor), self])
    }

    /// `base^power` for a small non-negative integer power.
    pub fn pow(self, power: u32) -> Expr {
        Expr::product(std::iter::repeat_n(self, power as usize))
    }

    pub fn ite(cond: Cond, then: Expr, otherwise: Expr) -> Expr {
        match cond.constant_truth() {
            Some(true) => then,
            Some(false) => otherwise,
            None => Expr::Ite(Box::new(cond), Box::new(then), Box::new(otherwise)),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.to_string());
            }
            Expr::Add(items) | Expr::Mul(items) => items.iter().for_each(|e| e.collect_vars(out)),
            Expr::Ite(c, a, b) => {
                c.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn eval_f64<F>(&self, env: &F) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        Ok(match self {
            Expr::Const(c) => rational_to_f64(c),
            Expr::Var(name) => env(name).ok_or_else(|| EvalError::Unbound(name.to_string()))?,
            Expr::Add(items) => {
                let mut acc = 0.0;
                for item in items {
                    acc += item.eval_f64(env)?;
                }
                acc
            }
            Expr::Mul(items) => {
                let mut acc = 1.0;
                for item in items {
                    acc *= item.eval_f64(env)?;
                }
                acc
            }
            Expr::Ite(c, a, b) => {
                if c.eval_f64(env)? {
                    a.eval_f64(env)?
                } else {
                    b.eval_f64(env)?
                }
            }
        })
    }

    pub fn eval_exact(&self, env: &BTreeMap<String, Rational>) -> Result<Rational, EvalError> {
        Ok(match self {
            Expr::Const(c) => c.clone(),
            Expr::Var(name) => env
                .get(name.as_ref())
                .cloned()
                .ok_or_else(|| EvalError::Unbound(name.to_string()))?,
            Expr::Add(items) => {
                let mut acc = Rational::zero();
                for item in items {
                    acc += item.eval_exact(env)?;
                }
                acc
            }
            Expr::Mul(items) => {
                let mut acc = Rational::one();
                for item in items {
                    acc *= item.eval_exact(env)?;
                }
                acc
            }
            Expr::Ite(c, a, b) => {
                if c.eval_exact(env)? {
                    a.eval_exact(env)?
                } else {
                    b.eval_exact(env)?
                }
            }
        })
    }

    /// Replaces variables found in `map`, folding constants on the way back up.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => map.get(name.as_ref()).cloned().unwrap_or_else(|| self.clone()),
            Expr::Add(items) => Expr::sum(items.iter().map(|e| e.substitute(map))),
            Expr::Mul(items) => Expr::product(items.iter().map(|e| e.substitute(map))),
            Expr::Ite(c, a, b) => Expr::ite(c.substitute(map), a.substitute(map), b.substitute(map)),
        }
    }

    pub fn write_smt(&self, out: &mut String) {
        match self {
            Expr::Const(c) => write_smt_rational(c, out),
            Expr::Var(name) => out.push_str(&smt_symbol(name)),
            Expr::Add(items) => write_smt_app("+", items, out),
            Expr::Mul(items) => write_smt_app("*", items, out),
            Expr::Ite(c, a, b) => {
                out.push_str("(ite ");
                c.write_smt(out);
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
        }
    }

    pub fn to_smt(&self) -> String {
        let mut out = String::new();
        self.write_smt(&mut out);
        out
    }
}

fn write_smt_app(op: &str, items: &[Expr], out: &mut String) {
    out.push('(');
    out.push_str(op);
    for item in items {
        out.push(' ');
        item.write_smt(out);
    }
    out.push(')');
}

pub fn write_smt_rational(value: &Rational, out: &mut String) {
    let magnitude = value.abs();
    let body = if magnitude.denom().is_one() {
        format!("{}.0", magnitude.numer())
    } else {
        format!("(/ {}.0 {}.0)", magnitude.numer(), magnitude.denom())
    };
    if value.is_negative() {
        out.push_str("(- ");
        out.push_str(&body);
        out.push(')');
    } else {
        out.push_str(&body);
    }
}

/// Quotes a symbol with `|…|` unless it is a plain SMT-LIB simple symbol.
pub fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_~!@$%^&*+-=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

impl Cond {
    pub fn cmp(rel: Rel, lhs: Expr, rhs: Expr) -> Cond {
        Cond::Cmp(rel, lhs, rhs)
    }

    pub fn and(items: Vec<Cond>) -> Cond {
        let mut flat = Vec::new();
        for item in items {
            match item.constant_truth() {
                Some(true) => {}
                Some(false) => return item,
                None => match item {
                    Cond::And(inner) => flat.extend(inner),
                    other => flat.push(other),
                },
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Cond::And(flat)
        }
    }

    /// Truth value when both sides fold to constants.
    pub fn constant_truth(&self) -> Option<bool> {
        match self {
            Cond::Cmp(rel, a, b) => match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => Some(rel.holds(x, y)),
                _ => None,
            },
            Cond::And(items) => {
                let mut all = Some(true);
                for item in items {
                    match item.constant_truth() {
                        Some(false) => return Some(false),
                        Some(true) => {}
                        None => all = None,
                    }
                }
                all
            }
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Cond::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Cond::And(items) => items.iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn eval_f64<F>(&self, env: &F) -> Result<bool, EvalError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        Ok(match self {
            Cond::Cmp(rel, a, b) => rel.holds(&a.eval_f64(env)?, &b.eval_f64(env)?),
            Cond::And(items) => {
                for item in items {
                    if !item.eval_f64(env)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    pub fn eval_exact(&self, env: &BTreeMap<String, Rational>) -> Result<bool, EvalError> {
        Ok(match self {
            Cond::Cmp(rel, a, b) => rel.holds(&a.eval_exact(env)?, &b.eval_exact(env)?),
            Cond::And(items) => {
                for item in items {
                    if !item.eval_exact(env)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Cond {
        match self {
            Cond::Cmp(rel, a, b) => Cond::Cmp(*rel, a.substitute(map), b.substitute(map)),
            Cond::And(items) => Cond::and(items.iter().map(|c| c.substitute(map)).collect()),
        }
    }

    pub fn write_smt(&self, out: &mut String) {
        match self {
            Cond::Cmp(rel, a, b) => {
                out.push('(');
                out.push_str(rel.smt());
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
            Cond::And(items) => {
                if items.is_empty() {
                    out.push_str("true");
                    return;
                }
                out.push_str("(and");
                for item in items {
                    out.push(' ');
                    item.write_smt(out);
                }
                out.push(')');
            }
        }
    }

    pub fn to_smt(&self) -> String {
        let mut out = String::new();
        self.write_smt(&mut out);
        out
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.denom().is_one() {
                    write!(f, "{}", c.numer())
                } else {
                    write!(f, "{}", rational_to_f64(c))
                }
            }
            Expr::Var(name) => f.write_str(name),
            Expr::Add(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
            Expr::Mul(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str("·")?;
                    }
                    write!(f, "{item}")?;
                }
                Ok(())
            }
            Expr::Ite(c, a, b) => write!(f, "ite({}, {a}, {b})", c.to_smt()),
        }
    }
}
