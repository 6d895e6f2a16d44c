//! Arithmetic expressions and comparison predicates for flows, guards,
//! invariants, resets, and output maps.
//!
//! Grammar, whitespace-insensitive:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | ident | 'exp' '(' expr ')' | '(' expr ')' | '-' factor
//! pred   := 'true' | expr cmp expr        cmp := '<=' | '>=' | '<' | '>'
//! ```
//!
//! `+`, `-`, `*`, `/` are left-associative. `exp` is reserved for the
//! exponential function and cannot be used as a variable name.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("parse error at column {col}: {message}")]
pub struct ParseError {
    /// 1-based column in the parsed text.
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression value is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser::new(text);
        let e = p.expr()?;
        p.expect_end()?;
        Ok(e)
    }

    /// Evaluates with variable values supplied by `lookup`.
    pub fn eval(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(n) => *n,
            Expr::Var(name) => lookup(name)
                .ok_or_else(|| EvalError::UnknownVariable(name.clone()))?,
            Expr::Neg(e) => -e.eval(lookup)?,
            Expr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            Expr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            Expr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            Expr::Div(a, b) => {
                let d = b.eval(lookup)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(lookup)? / d
            }
            Expr::Exp(e) => e.eval(lookup)?.exp(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Collects the names of all variables mentioned.
    pub fn variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(e) | Expr::Exp(e) => e.variables(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    /// Resolves variable names to slot indices for fast repeated evaluation.
    pub fn bind(&self, slot_of: &impl Fn(&str) -> Option<usize>) -> Result<BoundExpr, EvalError> {
        Ok(match self {
            Expr::Num(n) => BoundExpr::Num(*n),
            Expr::Var(name) => BoundExpr::Slot(
                slot_of(name).ok_or_else(|| EvalError::UnknownVariable(name.clone()))?,
            ),
            Expr::Neg(e) => BoundExpr::Neg(Box::new(e.bind(slot_of)?)),
            Expr::Add(a, b) => BoundExpr::Add(Box::new(a.bind(slot_of)?), Box::new(b.bind(slot_of)?)),
            Expr::Sub(a, b) => BoundExpr::Sub(Box::new(a.bind(slot_of)?), Box::new(b.bind(slot_of)?)),
            Expr::Mul(a, b) => BoundExpr::Mul(Box::new(a.bind(slot_of)?), Box::new(b.bind(slot_of)?)),
            Expr::Div(a, b) => BoundExpr::Div(Box::new(a.bind(slot_of)?), Box::new(b.bind(slot_of)?)),
            Expr::Exp(e) => BoundExpr::Exp(Box::new(e.bind(slot_of)?)),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Exp(..) => 4,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(n) => write!(f, "{n}")?,
            Expr::Var(name) => write!(f, "{name}")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 4)?;
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " / ")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Exp(e) => {
                write!(f, "exp(")?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if prec < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// An [`Expr`] with variables resolved to indices into a slot array.
#[derive(Debug, Clone)]
pub enum BoundExpr {
    Num(f64),
    Slot(usize),
    Neg(Box<BoundExpr>),
    Add(Box<BoundExpr>, Box<BoundExpr>),
    Sub(Box<BoundExpr>, Box<BoundExpr>),
    Mul(Box<BoundExpr>, Box<BoundExpr>),
    Div(Box<BoundExpr>, Box<BoundExpr>),
    Exp(Box<BoundExpr>),
}

impl BoundExpr {
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            BoundExpr::Num(n) => *n,
            BoundExpr::Slot(i) => slots[*i],
            BoundExpr::Neg(e) => -e.eval(slots)?,
            BoundExpr::Add(a, b) => a.eval(slots)? + b.eval(slots)?,
            BoundExpr::Sub(a, b) => a.eval(slots)? - b.eval(slots)?,
            BoundExpr::Mul(a, b) => a.eval(slots)? * b.eval(slots)?,
            BoundExpr::Div(a, b) => {
                let d = b.eval(slots)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(slots)? / d
            }
            BoundExpr::Exp(e) => e.eval(slots)?.exp(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

/// A comparison between two expressions, or the constant `true`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    True,
    Cmp { lhs: Expr, op: CmpOp, rhs: Expr },
}

impl Predicate {
    pub fn parse(text: &str) -> Result<Predicate, ParseError> {
        let mut p = Parser::new(text);
        let pred = p.predicate()?;
        p.expect_end()?;
        Ok(pred)
    }

    pub fn cmp(lhs: Expr, op: CmpOp, rhs: Expr) -> Predicate {
        Predicate::Cmp { lhs, op, rhs }
    }

    pub fn holds(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<bool, EvalError> {
        match self {
            Predicate::True => Ok(true),
            Predicate::Cmp { lhs, op, rhs } => {
                let l = lhs.eval(lookup)?;
                let r = rhs.eval(lookup)?;
                Ok(match op {
                    CmpOp::Le => l <= r,
                    CmpOp::Ge => l >= r,
                    CmpOp::Lt => l < r,
                    CmpOp::Gt => l > r,
                })
            }
        }
    }

    /// Signed slack, non-negative exactly when the predicate holds (with the
    /// boundary counting as holding for strict comparisons too, which is the
    /// resolution used by event detection). `None` for the constant `true`,
    /// which has no meaningful distance to its boundary.
    pub fn slack(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<Option<f64>, EvalError> {
        match self {
            Predicate::True => Ok(None),
            Predicate::Cmp { lhs, op, rhs } => {
                let l = lhs.eval(lookup)?;
                let r = rhs.eval(lookup)?;
                Ok(Some(match op {
                    CmpOp::Le | CmpOp::Lt => r - l,
                    CmpOp::Ge | CmpOp::Gt => l - r,
                }))
            }
        }
    }

    pub fn variables(&self, out: &mut BTreeSet<String>) {
        if let Predicate::Cmp { lhs, rhs, .. } = self {
            lhs.variables(out);
            rhs.variables(out);
        }
    }

    pub fn bind(&self, slot_of: &impl Fn(&str) -> Option<usize>) -> Result<BoundPred, EvalError> {
        Ok(match self {
            Predicate::True => BoundPred::True,
            Predicate::Cmp { lhs, op, rhs } => BoundPred::Cmp {
                lhs: lhs.bind(slot_of)?,
                op: *op,
                rhs: rhs.bind(slot_of)?,
            },
        })
    }

    /// Recognizes single-variable interval constraints `x op c` or `c op x`,
    /// normalized to the variable on the left. Used to prove guards disjoint.
    pub fn as_interval(&self) -> Option<(&str, CmpOp, f64)> {
        let Predicate::Cmp { lhs, op, rhs } = self else {
            return None;
        };
        match (lhs, rhs) {
            (Expr::Var(v), Expr::Num(c)) => Some((v.as_str(), *op, *c)),
            (Expr::Num(c), Expr::Var(v)) => {
                let flipped = match op {
                    CmpOp::Le => CmpOp::Ge,
                    CmpOp::Ge => CmpOp::Le,
                    CmpOp::Lt => CmpOp::Gt,
                    CmpOp::Gt => CmpOp::Lt,
                };
                Some((v.as_str(), flipped, *c))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::True => write!(f, "true"),
            Predicate::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
        }
    }
}

/// A [`Predicate`] with variables resolved to slot indices.
#[derive(Debug, Clone)]
pub enum BoundPred {
    True,
    Cmp {
        lhs: BoundExpr,
        op: CmpOp,
        rhs: BoundExpr,
    },
}

impl BoundPred {
    pub fn holds(&self, slots: &[f64]) -> Result<bool, EvalError> {
        match self {
            BoundPred::True => Ok(true),
            BoundPred::Cmp { lhs, op, rhs } => {
                let l = lhs.eval(slots)?;
                let r = rhs.eval(slots)?;
                Ok(match op {
                    CmpOp::Le => l <= r,
                    CmpOp::Ge => l >= r,
                    CmpOp::Lt => l < r,
                    CmpOp::Gt => l > r,
                })
            }
        }
    }

    /// See [`Predicate::slack`].
    pub fn slack(&self, slots: &[f64]) -> Result<Option<f64>, EvalError> {
        match self {
            BoundPred::True => Ok(None),
            BoundPred::Cmp { lhs, op, rhs } => {
                let l = lhs.eval(slots)?;
                let r = rhs.eval(slots)?;
                Ok(Some(match op {
                    CmpOp::Le | CmpOp::Lt => r - l,
                    CmpOp::Ge | CmpOp::Gt => l - r,
                }))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Parser<'a> {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, at: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            col: at + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(self.pos, format!("expected `{}`", c as char)))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        if self.peek().is_some() {
            Err(self.error(self.pos, "unexpected trailing input"))
        } else {
            Ok(())
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        if self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_')
        {
            self.pos += 1;
            while self
                .bytes
                .get(self.pos)
                .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
            {
                self.pos += 1;
            }
            Some(&self.text[start..self.pos])
        } else {
            None
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                    self.pos += 1;
                }
            } else {
                // Not an exponent after all (e.g. `2exp(x)` is an error later).
                self.pos = mark;
            }
        }
        let slice = &self.text[start..self.pos];
        // Literals that overflow to infinity would print as `inf`, which
        // reads back as a variable name, so they are rejected here.
        match slice.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(start, format!("invalid number `{slice}`"))),
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number().map(Expr::Num),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident().unwrap();
                if name == "exp" {
                    self.expect(b'(')?;
                    let e = self.expr()?;
                    self.expect(b')')?;
                    Ok(Expr::Exp(Box::new(e)))
                } else {
                    Ok(Expr::Var(name.to_string()))
                }
            }
            Some(c) => Err(self.error(self.pos, format!("unexpected character `{}`", c as char))),
            None => Err(self.error(self.pos, "unexpected end of expression")),
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    e = Expr::Div(Box::new(e), Box::new(self.factor()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        self.skip_ws();
        let mark = self.pos;
        if let Some(word) = self.ident() {
            if word == "true" && self.peek().is_none() {
                return Ok(Predicate::True);
            }
            self.pos = mark;
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(b'<') => {
                self.pos += 1;
                if self.bytes.get(self.pos) == Some(&b'=') {
                    self.pos += 1;
                    CmpOp::Le
                } else {
                    CmpOp::Lt
                }
            }
            Some(b'>') => {
                self.pos += 1;
                if self.bytes.get(self.pos) == Some(&b'=') {
                    self.pos += 1;
                    CmpOp::Ge
                } else {
                    CmpOp::Gt
                }
            }
            _ => return Err(self.error(self.pos, "expected a comparison operator")),
        };
        let rhs = self.expr()?;
        Ok(Predicate::Cmp { lhs, op, rhs })
    }
}

/// Parses an expression; entry point shared by the automaton text format.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    Expr::parse(text)
}

/// Parses a predicate (`true` or a comparison).
pub fn parse_predicate(text: &str) -> Result<Predicate, ParseError> {
    Predicate::parse(text)
}
