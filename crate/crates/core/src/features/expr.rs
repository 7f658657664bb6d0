//! Arithmetic expressions for engineered features.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `abs`, `log` (natural), `sqrt`, `min`, `max`. Any non-finite
//! intermediate (division by zero, log of a non-positive value, square root
//! of a negative value, missing input) makes the whole result missing (NaN).

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Log,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func::Abs,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Abs | Func::Log | Func::Sqrt => n == 1,
            Func::Min | Func::Max => n >= 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Parsed expression; variables are resolved to slot indices by [`Expr::resolve`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Slot(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' => {
                tokens.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse()
                    .map_err(|_| Error::Catalog(format!("bad number {text:?} in {src:?}")))?;
                tokens.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Catalog(format!("unexpected character {other:?} in {src:?}"))),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn err(&self, what: &str) -> Error {
        Error::Catalog(format!("{what} in expression {:?}", self.src))
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(self.err(&format!("expected {want:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if self.peek() != Some(&Token::LParen) {
                    return Ok(Expr::Var(name));
                }
                let func = Func::from_name(&name).ok_or_else(|| self.err(&format!("unknown function {name}")))?;
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(&Token::Comma) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(Token::RParen)?;
                if !func.arity_ok(args.len()) {
                    return Err(self.err(&format!("{name} called with {} arguments", args.len())));
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// Names of all variables, in first-appearance order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Num(_) | Expr::Slot(_) => {}
        }
    }

    /// Replace variable names with slot indices.
    pub fn resolve(&self, lookup: &impl Fn(&str) -> Option<usize>) -> Result<Expr> {
        Ok(match self {
            Expr::Var(v) => Expr::Slot(lookup(v).ok_or_else(|| Error::Catalog(format!("unknown column {v}")))?),
            Expr::Num(x) => Expr::Num(*x),
            Expr::Slot(s) => Expr::Slot(*s),
            Expr::Neg(e) => Expr::Neg(Box::new(e.resolve(lookup)?)),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.resolve(lookup)?), Box::new(b.resolve(lookup)?)),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.resolve(lookup)).collect::<Result<_>>()?),
        })
    }

    /// Evaluate against slot values. Unresolved variables evaluate to NaN.
    pub fn eval(&self, slots: &[f64]) -> f64 {
        let v = self.eval_raw(slots);
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    }

    fn eval_raw(&self, slots: &[f64]) -> f64 {
        let finite = |x: f64| if x.is_finite() { x } else { f64::NAN };
        match self {
            Expr::Num(x) => *x,
            Expr::Var(_) => f64::NAN,
            Expr::Slot(s) => slots.get(*s).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval_raw(slots),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_raw(slots), b.eval_raw(slots));
                finite(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => f64::NAN,
                    BinOp::Div => a / b,
                })
            }
            Expr::Call(f, args) => {
                let vals: Vec<f64> = args.iter().map(|a| a.eval_raw(slots)).collect();
                if vals.iter().any(|v| v.is_nan()) {
                    return f64::NAN;
                }
                finite(match f {
                    Func::Abs => vals[0].abs(),
                    Func::Log if vals[0] <= 0.0 => f64::NAN,
                    Func::Log => vals[0].ln(),
                    Func::Sqrt if vals[0] < 0.0 => f64::NAN,
                    Func::Sqrt => vals[0].sqrt(),
                    Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
            }
        }
    }
}
