//! Condition expressions over pose primitives.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr      := and_expr ( "or" and_expr )*
//! and_expr  := atom ( "and" atom )*
//! atom      := "(" expr ")" | term
//! term      := primitive cmp ( primitive | number unit? )
//! primitive := Angle(id, id, id) | X(id) | Y(id)
//! cmp       := "~=" | "<" | ">" | "<=" | ">="
//! unit      := "deg" | "°"
//! id        := [a-z_0-9]+
//! ```
//!
//! `and` binds tighter than `or`. Grouping parentheses are accepted so every
//! tree has a printable form; the printer only emits them around an `or`
//! nested inside an `and`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A measurable quantity on the skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Primitive {
    /// Interior angle at the middle joint, in degrees.
    Angle(String, String, String),
    /// Normalized horizontal position of a joint.
    X(String),
    /// Normalized vertical position of a joint (image convention, y down).
    Y(String),
}

impl Primitive {
    pub fn joints(&self) -> Vec<&str> {
        match self {
            Primitive::Angle(a, b, c) => vec![a, b, c],
            Primitive::X(j) | Primitive::Y(j) => vec![j],
        }
    }

    pub fn unit_class(&self) -> UnitClass {
        match self {
            Primitive::Angle(..) => UnitClass::Degrees,
            Primitive::X(_) | Primitive::Y(_) => UnitClass::Position,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Angle(a, b, c) => write!(f, "Angle({a},{b},{c})"),
            Primitive::X(j) => write!(f, "X({j})"),
            Primitive::Y(j) => write!(f, "Y({j})"),
        }
    }
}

/// Which tolerance family a comparison belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitClass {
    Degrees,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Deg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub value: f64,
    pub unit: Option<Unit>,
}

impl Literal {
    pub fn unit_class(&self) -> Option<UnitClass> {
        self.unit.map(|Unit::Deg| UnitClass::Degrees)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)?;
        if let Some(Unit::Deg) = self.unit {
            f.write_str(" deg")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Primitive(Primitive),
    Literal(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Primitive(p) => p.fmt(f),
            Operand::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    ApproxEq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::ApproxEq => "~=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
        }
    }

    /// The comparator obtained by negating both operands.
    pub fn mirrored(self) -> Comparator {
        match self {
            Comparator::ApproxEq => Comparator::ApproxEq,
            Comparator::Lt => Comparator::Gt,
            Comparator::Gt => Comparator::Lt,
            Comparator::Le => Comparator::Ge,
            Comparator::Ge => Comparator::Le,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub lhs: Primitive,
    pub cmp: Comparator,
    pub rhs: Operand,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionExpr {
    Compare(Comparison),
    And(Vec<ConditionExpr>),
    Or(Vec<ConditionExpr>),
}

impl ConditionExpr {
    /// All primitives in the tree, in first-appearance order, deduplicated.
    pub fn primitives(&self) -> Vec<&Primitive> {
        let mut out: Vec<&Primitive> = Vec::new();
        self.collect_primitives(&mut out);
        out
    }

    fn collect_primitives<'a>(&'a self, out: &mut Vec<&'a Primitive>) {
        match self {
            ConditionExpr::Compare(c) => {
                if !out.contains(&&c.lhs) {
                    out.push(&c.lhs);
                }
                if let Operand::Primitive(p) = &c.rhs {
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
            ConditionExpr::And(xs) | ConditionExpr::Or(xs) => {
                for x in xs {
                    x.collect_primitives(out);
                }
            }
        }
    }

    /// Every joint name referenced anywhere in the tree, deduplicated.
    pub fn joints(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in self.primitives() {
            for j in p.joints() {
                if !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out
    }

    pub fn visit_comparisons<'a>(&'a self, f: &mut impl FnMut(&'a Comparison)) {
        match self {
            ConditionExpr::Compare(c) => f(c),
            ConditionExpr::And(xs) | ConditionExpr::Or(xs) => {
                for x in xs {
                    x.visit_comparisons(f);
                }
            }
        }
    }

    pub fn map_comparisons(self, f: &mut impl FnMut(Comparison) -> Comparison) -> ConditionExpr {
        match self {
            ConditionExpr::Compare(c) => ConditionExpr::Compare(f(c)),
            ConditionExpr::And(xs) => {
                ConditionExpr::And(xs.into_iter().map(|x| x.map_comparisons(f)).collect())
            }
            ConditionExpr::Or(xs) => {
                ConditionExpr::Or(xs.into_iter().map(|x| x.map_comparisons(f)).collect())
            }
        }
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::Compare(c) => c.fmt(f),
            ConditionExpr::Or(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    x.fmt(f)?;
                }
                Ok(())
            }
            ConditionExpr::And(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    match x {
                        ConditionExpr::Or(_) => write!(f, "({x})")?,
                        _ => x.fmt(f)?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// Parse failure with the character position where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at position {position}")]
pub struct GrammarError {
    pub position: usize,
    pub message: String,
}

impl GrammarError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        GrammarError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    LParen,
    RParen,
    Comma,
    Cmp(Comparator),
    Degree,
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, GrammarError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '.';
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            ',' => {
                out.push((start, Tok::Comma));
                i += 1;
            }
            '°' => {
                out.push((start, Tok::Degree));
                i += 1;
            }
            '~' | '<' | '>' | '=' | '!' => {
                let next = chars.get(i + 1).copied();
                let (cmp, len) = match (c, next) {
                    ('~', Some('=')) => (Comparator::ApproxEq, 2),
                    ('<', Some('=')) => (Comparator::Le, 2),
                    ('>', Some('=')) => (Comparator::Ge, 2),
                    ('<', _) => (Comparator::Lt, 1),
                    ('>', _) => (Comparator::Gt, 1),
                    _ => {
                        let mut end = i + 1;
                        while end < chars.len() && "~<>=!".contains(chars[end]) {
                            end += 1;
                        }
                        let op: String = chars[i..end].iter().collect();
                        return Err(GrammarError::new(start, format!("unknown comparator '{op}'")));
                    }
                };
                out.push((start, Tok::Cmp(cmp)));
                i += len;
            }
            '-' if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.') => {
                i += 1;
                while i < chars.len() && is_word(chars[i]) {
                    i += 1;
                }
                out.push((start, Tok::Word(chars[start..i].iter().collect())));
            }
            c if is_word(c) => {
                while i < chars.len() && is_word(chars[i]) {
                    i += 1;
                }
                out.push((start, Tok::Word(chars[start..i].iter().collect())));
            }
            other => {
                return Err(GrammarError::new(start, format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), GrammarError> {
        let at = self.here();
        match self.bump() {
            Some((_, t)) if t == want => Ok(()),
            Some((_, Tok::RParen)) if what != "')'" => {
                Err(GrammarError::new(at, format!("unbalanced parentheses: expected {what}")))
            }
            None if what == "')'" => {
                Err(GrammarError::new(at, "unbalanced parentheses: missing ')'"))
            }
            _ => Err(GrammarError::new(at, format!("expected {what}"))),
        }
    }

    fn parse_or(&mut self) -> Result<ConditionExpr, GrammarError> {
        let mut terms = vec![self.parse_and()?];
        while self.keyword("or") {
            self.pos += 1;
            terms.push(self.parse_and()?);
        }
        Ok(join(terms, false))
    }

    fn parse_and(&mut self) -> Result<ConditionExpr, GrammarError> {
        let mut terms = vec![self.parse_atom()?];
        while self.keyword("and") {
            self.pos += 1;
            terms.push(self.parse_atom()?);
        }
        Ok(join(terms, true))
    }

    fn parse_atom(&mut self) -> Result<ConditionExpr, GrammarError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let inner = self.parse_or()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        let lhs = match self.parse_operand()? {
            Operand::Primitive(p) => p,
            Operand::Literal(_) => {
                return Err(GrammarError::new(
                    self.toks[self.pos - 1].0,
                    "comparison must start with a primitive",
                ))
            }
        };
        let at = self.here();
        let cmp = match self.bump() {
            Some((_, Tok::Cmp(c))) => c,
            Some((_, Tok::Word(w))) => {
                return Err(GrammarError::new(at, format!("unknown comparator '{w}'")))
            }
            _ => return Err(GrammarError::new(at, "expected comparator")),
        };
        let rhs = self.parse_operand()?;
        Ok(ConditionExpr::Compare(Comparison { lhs, cmp, rhs }))
    }

    fn parse_operand(&mut self) -> Result<Operand, GrammarError> {
        let at = self.here();
        let word = match self.bump() {
            Some((_, Tok::Word(w))) => w,
            Some((_, Tok::RParen)) => {
                return Err(GrammarError::new(at, "unbalanced parentheses: unexpected ')'"))
            }
            _ => return Err(GrammarError::new(at, "expected primitive or number")),
        };
        let first = word.chars().next().unwrap_or(' ');
        if first.is_ascii_digit() || first == '-' || first == '.' {
            let value: f64 = word
                .parse()
                .map_err(|_| GrammarError::new(at, format!("invalid number '{word}'")))?;
            if !value.is_finite() {
                return Err(GrammarError::new(at, format!("invalid number '{word}'")));
            }
            let unit = match self.peek() {
                Some(Tok::Word(w)) if w == "deg" => {
                    self.pos += 1;
                    Some(Unit::Deg)
                }
                Some(Tok::Degree) => {
                    self.pos += 1;
                    Some(Unit::Deg)
                }
                _ => None,
            };
            return Ok(Operand::Literal(Literal { value, unit }));
        }
        let arity = match word.as_str() {
            "Angle" => 3,
            "X" | "Y" => 1,
            _ => return Err(GrammarError::new(at, format!("unknown primitive '{word}'"))),
        };
        self.expect(Tok::LParen, "'(' after primitive")?;
        let mut args = Vec::with_capacity(arity);
        loop {
            let at = self.here();
            match self.bump() {
                Some((_, Tok::Word(id))) if is_identifier(&id) => args.push(id),
                Some((_, Tok::Word(id))) => {
                    return Err(GrammarError::new(at, format!("invalid joint identifier '{id}'")))
                }
                Some((_, Tok::RParen)) if args.is_empty() => {
                    return Err(GrammarError::new(
                        at,
                        format!("{word} takes {arity} argument(s), got 0"),
                    ))
                }
                None => return Err(GrammarError::new(at, "unbalanced parentheses: missing ')'")),
                _ => return Err(GrammarError::new(at, "expected joint identifier")),
            }
            let at = self.here();
            match self.bump() {
                Some((_, Tok::Comma)) => continue,
                Some((_, Tok::RParen)) => break,
                None => return Err(GrammarError::new(at, "unbalanced parentheses: missing ')'")),
                _ => return Err(GrammarError::new(at, "expected ',' or ')'")),
            }
        }
        if args.len() != arity {
            return Err(GrammarError::new(
                at,
                format!("{word} takes {arity} argument(s), got {}", args.len()),
            ));
        }
        let mut it = args.into_iter();
        let p = match arity {
            3 => Primitive::Angle(
                it.next().unwrap_or_default(),
                it.next().unwrap_or_default(),
                it.next().unwrap_or_default(),
            ),
            _ if word == "X" => Primitive::X(it.next().unwrap_or_default()),
            _ => Primitive::Y(it.next().unwrap_or_default()),
        };
        Ok(Operand::Primitive(p))
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Flatten same-kind children so `a and (b and c)` and `a and b and c` agree.
fn join(terms: Vec<ConditionExpr>, and: bool) -> ConditionExpr {
    if terms.len() == 1 {
        return terms.into_iter().next().expect("one term");
    }
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match (and, t) {
            (true, ConditionExpr::And(xs)) | (false, ConditionExpr::Or(xs)) => flat.extend(xs),
            (_, t) => flat.push(t),
        }
    }
    if and {
        ConditionExpr::And(flat)
    } else {
        ConditionExpr::Or(flat)
    }
}

/// Parse a condition string into an expression tree.
pub fn parse_condition(input: &str) -> Result<ConditionExpr, GrammarError> {
    let toks = lex(input)?;
    let end = input.chars().count();
    if toks.is_empty() {
        return Err(GrammarError::new(0, "empty condition"));
    }
    let mut p = Parser { toks, pos: 0, end };
    let expr = p.parse_or()?;
    if p.pos < p.toks.len() {
        let at = p.here();
        return Err(match p.peek() {
            Some(Tok::RParen) => GrammarError::new(at, "unbalanced parentheses: unexpected ')'"),
            Some(Tok::Word(w)) => {
                GrammarError::new(at, format!("unexpected '{w}', expected 'and' or 'or'"))
            }
            _ => GrammarError::new(at, "unexpected trailing input"),
        });
    }
    Ok(expr)
}
