//! Parser and evaluator for scalar functions of one variable `t`.
//!
//! The grammar is deliberately small so coefficient inputs stay auditable:
//! floating literals, the constant `pi`, the variable `t`, unary minus, the
//! binary operators `+ - * / ^`, and the functions `sin cos tan exp log sqrt
//! abs`. Precedence is `^` over unary minus over `* /` over `+ -`; `+ - * /`
//! associate left, `^` associates right.

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// One-variable function used in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Const(f64),
    Var,
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, Box<Expression>),
    Call(Func, Box<Expression>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } => *offset,
            ParseError::UnknownIdentifier { offset, .. } => *offset,
        }
    }
}

/// Evaluation failures are reported, never returned as silent NaN.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at t = {t}")]
    DivisionByZero { t: f64 },
    #[error("log of non-positive value {arg} at t = {t}")]
    LogNonPositive { t: f64, arg: f64 },
    #[error("square root of negative value {arg} at t = {t}")]
    SqrtNegative { t: f64, arg: f64 },
    #[error("tan evaluated within 1e-12 of a pole at t = {t}")]
    TanPole { t: f64 },
    #[error("non-integer power of negative base ({base}^{exponent}) at t = {t}")]
    PowDomain { t: f64, base: f64, exponent: f64 },
    #[error("expression input t = {t} is not finite")]
    NonFiniteInput { t: f64 },
}

/// How close the argument of `tan` may come to an odd multiple of pi/2.
pub const TAN_POLE_TOL: f64 = 1e-12;

impl Expression {
    /// Parse `source` into an expression tree.
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            Token::End(_) => Ok(e),
            tok => Err(ParseError::Syntax {
                offset: tok.offset(),
                message: format!("unexpected `{}`", tok.describe()),
            }),
        }
    }

    /// Evaluate at `t` in IEEE double precision.
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        if !t.is_finite() {
            return Err(EvalError::NonFiniteInput { t });
        }
        self.eval_inner(t)
    }

    fn eval_inner(&self, t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expression::Const(c) => *c,
            Expression::Var => t,
            Expression::Neg(a) => -a.eval_inner(t)?,
            Expression::Add(a, b) => a.eval_inner(t)? + b.eval_inner(t)?,
            Expression::Sub(a, b) => a.eval_inner(t)? - b.eval_inner(t)?,
            Expression::Mul(a, b) => a.eval_inner(t)? * b.eval_inner(t)?,
            Expression::Div(a, b) => {
                let d = b.eval_inner(t)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero { t });
                }
                a.eval_inner(t)? / d
            }
            Expression::Pow(a, b) => {
                let base = a.eval_inner(t)?;
                let exponent = b.eval_inner(t)?;
                if base == 0.0 && exponent < 0.0 {
                    return Err(EvalError::DivisionByZero { t });
                }
                if base < 0.0 && exponent.fract() != 0.0 {
                    return Err(EvalError::PowDomain { t, base, exponent });
                }
                base.powf(exponent)
            }
            Expression::Call(f, a) => {
                let x = a.eval_inner(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => {
                        // distance from x to the nearest odd multiple of pi/2
                        let u = x / std::f64::consts::PI - 0.5;
                        if (u - u.round()).abs() * std::f64::consts::PI < TAN_POLE_TOL {
                            return Err(EvalError::TanPole { t });
                        }
                        x.tan()
                    }
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::LogNonPositive { t, arg: x });
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::SqrtNegative { t, arg: x });
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                }
            }
        })
    }

    /// Printing precedence; used to emit a source form that reparses to the
    /// same tree.
    fn prec(&self) -> u8 {
        match self {
            Expression::Add(..) | Expression::Sub(..) => 1,
            Expression::Mul(..) | Expression::Div(..) => 2,
            Expression::Neg(..) => 3,
            Expression::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.prec();
        if prec < min {
            write!(f, "(")?;
        }
        match self {
            Expression::Const(c) => write!(f, "{c}")?,
            Expression::Var => write!(f, "t")?,
            Expression::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Expression::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, "+")?;
                b.fmt_prec(f, 2)?;
            }
            Expression::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, "-")?;
                b.fmt_prec(f, 2)?;
            }
            Expression::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Expression::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Expression::Pow(a, b) => {
                a.fmt_prec(f, 5)?;
                write!(f, "^")?;
                b.fmt_prec(f, 3)?;
            }
            Expression::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 1)?;
                write!(f, ")")?;
            }
        }
        if prec < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl FromStr for Expression {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(usize, f64),
    Ident(usize, String),
    Plus(usize),
    Minus(usize),
    Star(usize),
    Slash(usize),
    Caret(usize),
    LParen(usize),
    RParen(usize),
    End(usize),
}

impl Token {
    fn offset(&self) -> usize {
        match self {
            Token::Number(o, _)
            | Token::Ident(o, _)
            | Token::Plus(o)
            | Token::Minus(o)
            | Token::Star(o)
            | Token::Slash(o)
            | Token::Caret(o)
            | Token::LParen(o)
            | Token::RParen(o)
            | Token::End(o) => *o,
        }
    }

    fn describe(&self) -> String {
        match self {
            Token::Number(_, v) => format!("{v}"),
            Token::Ident(_, s) => s.clone(),
            Token::Plus(_) => "+".into(),
            Token::Minus(_) => "-".into(),
            Token::Star(_) => "*".into(),
            Token::Slash(_) => "/".into(),
            Token::Caret(_) => "^".into(),
            Token::LParen(_) => "(".into(),
            Token::RParen(_) => ")".into(),
            Token::End(_) => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push(Token::Plus(i));
                i += 1;
            }
            b'-' => {
                out.push(Token::Minus(i));
                i += 1;
            }
            b'*' => {
                out.push(Token::Star(i));
                i += 1;
            }
            b'/' => {
                out.push(Token::Slash(i));
                i += 1;
            }
            b'^' => {
                out.push(Token::Caret(i));
                i += 1;
            }
            b'(' => {
                out.push(Token::LParen(i));
                i += 1;
            }
            b')' => {
                out.push(Token::RParen(i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push(Token::Number(start, value));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token::Ident(start, src[start..i].to_string()));
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{}`", &src[i..i + 1]),
                })
            }
        }
    }
    out.push(Token::End(src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Plus(_) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::Add(Box::new(lhs), Box::new(rhs));
                }
                Token::Minus(_) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Token::Star(_) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::Mul(Box::new(lhs), Box::new(rhs));
                }
                Token::Slash(_) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if let Token::Minus(_) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expression::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.atom()?;
        if let Token::Caret(_) = self.peek() {
            self.bump();
            // right-associative, and `^` binds tighter than unary minus,
            // which is still allowed in the exponent: 2^-t
            let exponent = self.unary()?;
            return Ok(Expression::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        match self.bump() {
            Token::Number(_, v) => Ok(Expression::Const(v)),
            Token::Ident(offset, name) => match name.as_str() {
                "t" => Ok(Expression::Var),
                "pi" => Ok(Expression::Const(std::f64::consts::PI)),
                "sin" | "cos" | "tan" | "exp" | "log" | "sqrt" | "abs" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tan" => Func::Tan,
                        "exp" => Func::Exp,
                        "log" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Abs,
                    };
                    match self.bump() {
                        Token::LParen(_) => {}
                        tok => {
                            return Err(ParseError::Syntax {
                                offset: tok.offset(),
                                message: format!("expected `(` after `{name}`"),
                            })
                        }
                    }
                    let arg = self.expr()?;
                    match self.bump() {
                        Token::RParen(_) => Ok(Expression::Call(func, Box::new(arg))),
                        tok => Err(ParseError::Syntax {
                            offset: tok.offset(),
                            message: "expected `)`".into(),
                        }),
                    }
                }
                _ => Err(ParseError::UnknownIdentifier { offset, name }),
            },
            Token::LParen(_) => {
                let inner = self.expr()?;
                match self.bump() {
                    Token::RParen(_) => Ok(inner),
                    tok => Err(ParseError::Syntax {
                        offset: tok.offset(),
                        message: "expected `)`".into(),
                    }),
                }
            }
            tok => Err(ParseError::Syntax {
                offset: tok.offset(),
                message: format!("unexpected `{}`", tok.describe()),
            }),
        }
    }
}
