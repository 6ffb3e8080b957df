use std::collections::BTreeSet;

use thiserror::Error;

use super::{
    Accessor, AccessorKind, ActorDecl, AstExpr, BinOp, ConstraintAst, Landmark, Parameter, Ref, ScenarioProgram, Unit,
};
use crate::expr::{parse_decimal, Rel};
use crate::lane_map::Heading;
use crate::motion::PieceKind;

/// Parse failure with a 1-based source location.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, column, message: message.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Str(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Rel(Rel),
    End,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(n) => format!("number `{n}`"),
        Tok::Ident(i) => format!("`{i}`"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Rel(r) => format!("`{r}`"),
        Tok::End => "end of line".into(),
    }
}

fn tokenize(text: &str, line: usize, offset: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = offset + i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            continue;
        }
        if c == '"' || c == '\'' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != c {
                j += 1;
            }
            if j == chars.len() {
                return err(line, col, "unterminated string");
            }
            out.push((Tok::Str(chars[start..j].iter().collect()), col));
            i = j + 1;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match two.as_str() {
            "==" => (Tok::Rel(Rel::Eq), 2),
            "<=" => (Tok::Rel(Rel::Le), 2),
            ">=" => (Tok::Rel(Rel::Ge), 2),
            _ => match c {
                '<' => (Tok::Rel(Rel::Lt), 1),
                '>' => (Tok::Rel(Rel::Gt), 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                '=' => return err(line, col, "use `==` for equality"),
                other => return err(line, col, format!("unexpected character `{other}`")),
            },
        };
        out.push((tok, col));
        i += len;
    }
    out.push((Tok::End, offset + chars.len() + 1));
    Ok(out)
}

/// Splits an accessor identifier `A{id}{x|v|a}?` into its parts.
fn accessor_head(ident: &str) -> Option<(usize, AccessorKind)> {
    let rest = ident.strip_prefix('A')?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let kind = match &rest[digits.len()..] {
        "" => AccessorKind::Duration,
        "x" => AccessorKind::Position,
        "v" => AccessorKind::Velocity,
        "a" => AccessorKind::Acceleration,
        _ => return None,
    };
    Some((digits.parse().ok()?, kind))
}

struct ExprParser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    actors: &'a [ActorDecl],
    params: &'a mut Vec<Parameter>,
}

impl ExprParser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let (tok, col) = self.next();
        if tok == want {
            Ok(())
        } else {
            err(self.line, col, format!("expected {}, found {}", describe(&want), describe(&tok)))
        }
    }

    fn expr(&mut self) -> Result<AstExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = AstExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<AstExpr, ParseError> {
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            self.next();
            let rhs = self.factor()?;
            lhs = AstExpr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<AstExpr, ParseError> {
        let (tok, col) = self.next();
        match tok {
            Tok::Num(text) => match parse_decimal(&text) {
                Some(v) => Ok(AstExpr::Num(v)),
                None => err(self.line, col, format!("malformed number `{text}`")),
            },
            Tok::Minus => Ok(AstExpr::Neg(Box::new(self.factor()?))),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, col),
            other => err(self.line, col, format!("expected an operand, found {}", describe(&other))),
        }
    }

    fn ident(&mut self, name: String, col: usize) -> Result<AstExpr, ParseError> {
        if let Some((actor, kind)) = accessor_head(&name) {
            if *self.peek() == Tok::LParen {
                return self.accessor(actor, kind, col).map(AstExpr::Access);
            }
        }
        if name == "just_before" && *self.peek() == Tok::LParen {
            self.next();
            let e = self.expr()?;
            self.expect(Tok::RParen)?;
            return Ok(AstExpr::JustBefore(Box::new(e)));
        }
        if name == "just" {
            let (next, next_col) = self.next();
            if next != Tok::Ident("before".into()) {
                return err(self.line, next_col, "expected `before` after `just`");
            }
            return Ok(AstExpr::JustBefore(Box::new(self.factor()?)));
        }
        if let Some(landmark) = Landmark::parse(&name) {
            return Ok(AstExpr::Landmark(landmark));
        }
        if let Some(unit) = Unit::from_name(&name) {
            if !self.params.iter().any(|p| p.name == name) {
                self.params.push(Parameter { name: name.clone(), unit });
            }
            return Ok(AstExpr::Param(name));
        }
        err(
            self.line,
            col,
            format!("unknown identifier `{name}` (parameters end in _m, _s, _mps or _mpss; landmarks are {})", landmark_list()),
        )
    }

    fn accessor(&mut self, actor: usize, kind: AccessorKind, col: usize) -> Result<Accessor, ParseError> {
        self.expect(Tok::LParen)?;
        let (tok, ref_col) = self.next();
        let name = match tok {
            Tok::Ident(n) | Tok::Str(n) => n,
            other => return err(self.line, ref_col, format!("expected a knot or piece name, found {}", describe(&other))),
        };
        self.expect(Tok::RParen)?;
        let Some(decl) = self.actors.iter().find(|a| a.id == actor) else {
            return err(self.line, col, format!("actor {actor} is not declared"));
        };
        let target = if decl.knots.contains(&name) {
            Ref::Knot(name)
        } else if is_piece_reference(decl, &name) {
            if matches!(kind, AccessorKind::Position | AccessorKind::Duration) {
                return err(
                    self.line,
                    ref_col,
                    format!("piece `{name}` can only be read through velocity or acceleration accessors"),
                );
            }
            Ref::Piece(name)
        } else {
            return err(self.line, ref_col, format!("actor {actor} has no knot or piece named `{name}`"));
        };
        Ok(Accessor { actor, kind, target })
    }
}

fn is_piece_reference(decl: &ActorDecl, name: &str) -> bool {
    decl.piece_names().iter().any(|n| n == name) || decl.pieces.iter().filter(|k| k.base_name() == name).count() == 1
}

fn landmark_list() -> String {
    Landmark::ALL.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
}

fn parse_route(text: &str, line: usize, offset: usize) -> Result<Vec<Heading>, ParseError> {
    let mut route = Vec::new();
    let mut col = offset;
    for part in text.split(',') {
        let trimmed = part.trim();
        let lead = part.len() - part.trim_start().len();
        match Heading::parse(trimmed) {
            Ok(h) => route.push(h),
            Err(_) => return err(line, col + lead + 1, format!("invalid direction `{trimmed}` (expected N, E, S or W)")),
        }
        col += part.len() + 1;
    }
    Ok(route)
}

fn parse_skeleton(text: &str, line: usize, offset: usize) -> Result<(Vec<String>, Vec<PieceKind>), ParseError> {
    let trimmed = text.trim();
    let lead = text.len() - text.trim_start().len();
    let Some(inner) = trimmed.strip_prefix('[') else {
        return err(line, offset + lead + 1, "trajectory skeleton must start with `[`");
    };
    let Some(inner) = inner.strip_suffix(']') else {
        return err(line, offset + lead + trimmed.len(), "trajectory skeleton must end with `]`");
    };
    let mut knots = Vec::new();
    let mut pieces = Vec::new();
    let mut col = offset + lead + 2;
    let items: Vec<&str> = inner.split(',').collect();
    for (i, raw) in items.iter().enumerate() {
        let item = raw.trim();
        let item_col = col + (raw.len() - raw.trim_start().len());
        col += raw.len() + 1;
        if item.is_empty() {
            return err(line, item_col, "empty skeleton entry");
        }
        if i % 2 == 0 {
            if PieceKind::parse(item).is_some() {
                return err(line, item_col, format!("expected a knot, found piece `{item}`"));
            }
            if !item.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return err(line, item_col, format!("invalid knot name `{item}`"));
            }
            if knots.iter().any(|k| k == item) {
                return err(line, item_col, format!("duplicate knot `{item}`"));
            }
            knots.push(item.to_string());
        } else {
            match PieceKind::parse(item) {
                Some(kind) => pieces.push(kind),
                None => return err(line, item_col, format!("expected a piece (go, acc, dec, stop), found `{item}`")),
            }
        }
    }
    if items.len() % 2 == 0 || pieces.is_empty() {
        return err(line, offset + lead + trimmed.len(), "trajectory skeleton must alternate knots and pieces and end with a knot");
    }
    Ok((knots, pieces))
}

/// Strips a leading `- ` list marker, returning the rest and its column offset.
fn list_item(raw: &str) -> Option<(&str, usize)> {
    let lead = raw.len() - raw.trim_start().len();
    let rest = raw.trim_start().strip_prefix('-')?;
    Some((rest, lead + 1))
}

fn actor_header(line: &str) -> Option<&str> {
    line.trim().strip_prefix("Actor")?.trim().strip_suffix(':').map(str::trim)
}

/// Parses the pseudocode scenario format.
pub fn parse_scenario(text: &str) -> Result<ScenarioProgram, ParseError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    let mut actors: Vec<ActorDecl> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (n, raw) = lines[i];
        if raw.trim() == "Constraints:" {
            break;
        }
        let Some(id_text) = actor_header(raw) else {
            return err(n, 1, format!("unparsed line `{}` (expected `Actor <id>:` or `Constraints:`)", raw.trim()));
        };
        let Ok(id) = id_text.parse::<usize>() else {
            return err(n, 1, format!("invalid actor id `{id_text}`"));
        };
        if actors.iter().any(|a| a.id == id) {
            return err(n, 1, format!("actor {id} declared twice"));
        }
        let item = |k: usize, what: &str| -> Result<(usize, &str, usize), ParseError> {
            match lines.get(i + k) {
                Some(&(m, l)) => match list_item(l) {
                    Some((rest, off)) => Ok((m, rest, off)),
                    None => err(m, 1, format!("expected `- <{what}>` for actor {id}")),
                },
                None => err(n, 1, format!("actor {id} is missing its {what}")),
            }
        };
        let (m, route_text, off) = item(1, "route")?;
        let route = parse_route(route_text, m, off)?;
        let (m, skeleton_text, off) = item(2, "trajectory skeleton")?;
        let (knots, pieces) = parse_skeleton(skeleton_text, m, off)?;
        actors.push(ActorDecl { id, route, knots, pieces });
        i += 3;
    }
    if actors.is_empty() {
        return err(lines.first().map_or(1, |l| l.0), 1, "no actors declared");
    }
    let ids: BTreeSet<usize> = actors.iter().map(|a| a.id).collect();
    if ids.iter().copied().ne(0..actors.len()) {
        return err(lines[0].0, 1, "actor ids must be 0 (ego), 1, … without gaps");
    }
    actors.sort_by_key(|a| a.id);

    let mut constraints = Vec::new();
    let mut parameters = Vec::new();
    for &(n, raw) in lines.iter().skip(i + 1) {
        let toks = tokenize(raw, n, 0)?;
        let mut p = ExprParser { toks, pos: 0, line: n, actors: &actors, params: &mut parameters };
        let lhs = p.expr()?;
        let (tok, col) = p.next();
        let Tok::Rel(rel) = tok else {
            return err(n, col, format!("expected a relation (==, <, <=, >, >=), found {}", describe(&tok)));
        };
        let rhs = p.expr()?;
        let (tok, col) = p.next();
        if tok != Tok::End {
            return err(n, col, format!("unexpected {} after constraint", describe(&tok)));
        }
        if lhs.accessors().is_empty() {
            return err(n, 1, "the left-hand side must involve an actor state accessor");
        }
        constraints.push(ConstraintAst { lhs, rel, rhs, line: n });
    }
    Ok(ScenarioProgram { actors, constraints, parameters })
}
