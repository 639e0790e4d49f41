//! A small expression language for variable-scoring heuristics.
//!
//! Grammar (usual precedence, unary minus binds tightest):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := number | feature | func '(' expr (',' expr)? ')' | '(' expr ')'
//! feature := activity | saved_phase | conflicts_since_last_bump | var_index
//! func    := min | max | neg
//! ```
//!
//! `-` directly in front of a number literal yields a negative constant;
//! in front of anything else it yields `neg(..)`. Division by zero evaluates
//! to 0, so every expression is total.
//!
//! This file is also compiled standalone inside the exported solver package.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Activity,
    SavedPhase,
    ConflictsSinceLastBump,
    VarIndex,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Activity => "activity",
            Feature::SavedPhase => "saved_phase",
            Feature::ConflictsSinceLastBump => "conflicts_since_last_bump",
            Feature::VarIndex => "var_index",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "activity" => Feature::Activity,
            "saved_phase" => Feature::SavedPhase,
            "conflicts_since_last_bump" => Feature::ConflictsSinceLastBump,
            "var_index" => Feature::VarIndex,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeuristicExpr {
    Const(f64),
    Feature(Feature),
    Neg(Box<HeuristicExpr>),
    Binary(BinOp, Box<HeuristicExpr>, Box<HeuristicExpr>),
}

/// Per-variable inputs to a scoring expression.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VarFeatures {
    pub activity: f64,
    pub saved_phase: bool,
    pub conflicts_since_last_bump: u64,
    /// 1-based.
    pub var_index: usize,
}

impl HeuristicExpr {
    pub fn eval(&self, f: &VarFeatures) -> f64 {
        match self {
            HeuristicExpr::Const(c) => *c,
            HeuristicExpr::Feature(Feature::Activity) => f.activity,
            HeuristicExpr::Feature(Feature::SavedPhase) => f64::from(u8::from(f.saved_phase)),
            HeuristicExpr::Feature(Feature::ConflictsSinceLastBump) => f.conflicts_since_last_bump as f64,
            HeuristicExpr::Feature(Feature::VarIndex) => f.var_index as f64,
            HeuristicExpr::Neg(e) => -e.eval(f),
            HeuristicExpr::Binary(op, a, b) => {
                let (x, y) = (a.eval(f), b.eval(f));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            0.0
                        } else {
                            x / y
                        }
                    }
                    BinOp::Min => x.min(y),
                    BinOp::Max => x.max(y),
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(text)?;
        if tokens.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(Tok::RParen) => Err(ExprError::UnbalancedParens),
            Some(t) => Err(ExprError::Unexpected(t.describe())),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            HeuristicExpr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            HeuristicExpr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for HeuristicExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeuristicExpr::Const(c) => write!(f, "{c:?}"),
            HeuristicExpr::Feature(feat) => f.write_str(feat.name()),
            HeuristicExpr::Neg(e) => write!(f, "neg({e})"),
            HeuristicExpr::Binary(op @ (BinOp::Min | BinOp::Max), a, b) => {
                let name = if *op == BinOp::Min { "min" } else { "max" };
                write!(f, "{name}({a}, {b})")
            }
            HeuristicExpr::Binary(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    _ => ("/", 2),
                };
                // Left-associative: the right operand needs parentheses at equal precedence.
                if a.precedence() < prec {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {sym} ")?;
                if b.precedence() <= prec {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprError {
    Empty,
    UnbalancedParens,
    UnknownIdentifier(String),
    BadNumber(String),
    Unexpected(String),
    UnexpectedEnd,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Empty => write!(f, "empty expression"),
            ExprError::UnbalancedParens => write!(f, "unbalanced parentheses"),
            ExprError::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ExprError::BadNumber(s) => write!(f, "bad number `{s}`"),
            ExprError::Unexpected(s) => write!(f, "unexpected {s}"),
            ExprError::UnexpectedEnd => write!(f, "unexpected end of expression"),
        }
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Comma,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Tok>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            ',' => Some(Tok::Comma),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(tok);
            i += 1;
            continue;
        }
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| ExprError::BadNumber(s.to_string()))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Tok::Ident(text[start..i].to_string()));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or(c);
                return Err(ExprError::Unexpected(format!("character `{ch}`")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(Tok::RParen) | None if want == Tok::RParen => Err(ExprError::UnbalancedParens),
            Some(t) => Err(ExprError::Unexpected(t.describe())),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<HeuristicExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = HeuristicExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<HeuristicExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = HeuristicExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<HeuristicExpr, ExprError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            if let Some(Tok::Num(n)) = self.peek() {
                let n = *n;
                self.pos += 1;
                return Ok(HeuristicExpr::Const(-n));
            }
            return Ok(HeuristicExpr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<HeuristicExpr, ExprError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(HeuristicExpr::Const(n)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(feat) = Feature::from_name(&name) {
                    return Ok(HeuristicExpr::Feature(feat));
                }
                let op = match name.as_str() {
                    "min" => Some(BinOp::Min),
                    "max" => Some(BinOp::Max),
                    "neg" => None,
                    _ => return Err(ExprError::UnknownIdentifier(name)),
                };
                self.expect(Tok::LParen)?;
                let a = self.expr()?;
                let e = match op {
                    None => HeuristicExpr::Neg(Box::new(a)),
                    Some(op) => {
                        self.expect(Tok::Comma)?;
                        let b = self.expr()?;
                        HeuristicExpr::Binary(op, Box::new(a), Box::new(b))
                    }
                };
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::RParen) => Err(ExprError::UnbalancedParens),
            Some(t) => Err(ExprError::Unexpected(t.describe())),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}
