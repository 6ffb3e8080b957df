//! Minimal s-expression reader for solver replies.

use crate::expr::{parse_decimal, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            Sexp::Atom(_) => None,
        }
    }
}

/// Parses every top-level s-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let items = stack.pop().ok_or("unbalanced `)`")?;
                stack.last_mut().ok_or("unbalanced `)`")?.push(Sexp::List(items));
                i += 1;
            }
            '"' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                i += 1;
                let text: String = chars[start..i.min(chars.len())].iter().collect();
                stack.last_mut().unwrap().push(Sexp::Atom(text));
            }
            '|' => {
                let start = i + 1;
                i += 1;
                while i < chars.len() && chars[i] != '|' {
                    i += 1;
                }
                let text: String = chars[start..i.min(chars.len())].iter().collect();
                i += 1;
                stack.last_mut().unwrap().push(Sexp::Atom(text));
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()\";|".contains(chars[i]) {
                    i += 1;
                }
                stack.last_mut().unwrap().push(Sexp::Atom(chars[start..i].iter().collect()));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced `(`".into());
    }
    Ok(stack.pop().unwrap())
}

/// A model value: exact when it is a rational term, approximate when the
/// solver printed a decimal expansion ending in `?`.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Rational),
    Approx(Rational),
    /// Algebraic number or other term without a rational reading.
    Irrational,
}

/// Reads a rational constant term: numerals, `(- t)`, `(/ a b)`, `(+ …)`, `(* …)`.
pub fn value_of(term: &Sexp) -> Value {
    fn go(term: &Sexp, approx: &mut bool) -> Option<Rational> {
        match term {
            Sexp::Atom(a) => {
                let text = match a.strip_suffix('?') {
                    Some(t) => {
                        *approx = true;
                        t
                    }
                    None => a.as_str(),
                };
                parse_decimal(text)
            }
            Sexp::List(items) => {
                let (head, args) = items.split_first()?;
                let vals = args.iter().map(|a| go(a, approx)).collect::<Option<Vec<_>>>()?;
                match (head.atom()?, vals.as_slice()) {
                    ("-", [x]) => Some(-x.clone()),
                    ("-", [x, rest @ ..]) => Some(rest.iter().fold(x.clone(), |acc, v| acc - v)),
                    ("+", _) => Some(vals.iter().sum()),
                    ("*", _) => Some(vals.iter().product()),
                    ("/", [x, y]) if !num_traits::Zero::is_zero(y) => Some(x / y),
                    _ => None,
                }
            }
        }
    }
    let mut approx = false;
    match go(term, &mut approx) {
        Some(v) if approx => Value::Approx(v),
        Some(v) => Value::Exact(v),
        None => Value::Irrational,
    }
}

/// Extracts `(define-fun name () Real value)` entries from a model reply.
pub fn model_entries(model: &Sexp) -> Vec<(String, Value)> {
    let items = match model {
        Sexp::List(items) => items.as_slice(),
        Sexp::Atom(_) => return Vec::new(),
    };
    // Older solvers wrap the model in `(model …)`.
    let items = match items.first().and_then(Sexp::atom) {
        Some("model") => &items[1..],
        _ => items,
    };
    items
        .iter()
        .filter_map(|def| {
            let parts = def.list()?;
            match parts {
                [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), _sort, value]
                    if kw == "define-fun" && args.is_empty() =>
                {
                    Some((name.clone(), value_of(value)))
                }
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn reads_rational_terms() {
        let parsed = parse_all("(/ 1.0 3.0) (- 2.5) 7 (- (/ 3.0 4.0)) 1.25?").unwrap();
        assert_eq!(value_of(&parsed[0]), Value::Exact(r(1, 3)));
        assert_eq!(value_of(&parsed[1]), Value::Exact(r(-5, 2)));
        assert_eq!(value_of(&parsed[2]), Value::Exact(r(7, 1)));
        assert_eq!(value_of(&parsed[3]), Value::Exact(r(-3, 4)));
        assert_eq!(value_of(&parsed[4]), Value::Approx(r(5, 4)));
    }

    #[test]
    fn reads_models() {
        let text = "(\n  (define-fun x () Real\n    (root-obj (+ (^ x 2) (- 2)) 2))\n  (define-fun |a b| () Real\n    (/ 1.0 3.0))\n)";
        let parsed = parse_all(text).unwrap();
        let entries = model_entries(&parsed[0]);
        assert_eq!(entries, vec![("x".into(), Value::Irrational), ("a b".into(), Value::Exact(r(1, 3)))]);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(parse_all("(a (b)").is_err());
        assert!(parse_all("a)").is_err());
    }
}
