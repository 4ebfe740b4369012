//! Arithmetic expressions over chart coordinates.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          right associative, so -x^2 = -(x^2)
//! atom  := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers resolve, in order, to coordinates, bound names (parameters and
//! earlier definitions, substituted in place) and the constants `pi` and `e`.
//! Expressions are differentiated symbolically, which is how analytic
//! jacobians and metric derivatives are produced for catalog cases.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Sinh,
    Cosh,
    Tanh,
    Asinh,
    Acosh,
    Atanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "asin" | "arcsin" => Func::Asin,
            "acos" | "arccos" => Func::Acos,
            "atan" | "arctan" => Func::Atan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "asinh" | "arcsinh" => Func::Asinh,
            "acosh" | "arccosh" => Func::Acosh,
            "atanh" | "arctanh" => Func::Atanh,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Asin => "arcsin",
            Func::Acos => "arccos",
            Func::Atan => "arctan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Asinh => "arcsinh",
            Func::Acosh => "arccosh",
            Func::Atanh => "arctanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Asin => v.asin(),
            Func::Acos => v.acos(),
            Func::Atan => v.atan(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
            Func::Asinh => v.asinh(),
            Func::Acosh => v.acosh(),
            Func::Atanh => v.atanh(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Expression tree; variables are coordinate slots.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(slot: usize) -> Expr {
        Expr::Var(slot)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == value)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(0.0), _) => Expr::neg(b),
            (_, Some(0.0)) => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(0.0), _) => Expr::Const(0.0),
            (_, Some(0.0)) => Expr::Const(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            (Some(-1.0), _) => Expr::neg(b),
            (_, Some(-1.0)) => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x / y),
            (Some(0.0), _) => Expr::Const(0.0),
            (_, Some(1.0)) => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x.powf(y)),
            (_, Some(0.0)) => Expr::Const(1.0),
            (_, Some(1.0)) => a,
            _ => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        match a.as_const() {
            Some(x) => Expr::Const(f.apply(x)),
            None => Expr::Call(f, Box::new(a)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => match **b {
                Expr::Const(c) => const_pow(a.eval(x), c),
                _ => a.eval(x).powf(b.eval(x)),
            },
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Largest variable slot referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    /// Symbolic partial derivative with respect to variable `slot`.
    pub fn diff(&self, slot: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == slot { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(slot)),
            Expr::Add(a, b) => Expr::add(a.diff(slot), b.diff(slot)),
            Expr::Sub(a, b) => Expr::sub(a.diff(slot), b.diff(slot)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(slot), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(slot)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(slot);
                let db = b.diff(slot);
                if db.is_const(0.0) {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(
                            Expr::mul(da, (**b).clone()),
                            Expr::mul((**a).clone(), db),
                        ),
                        Expr::pow((**b).clone(), Expr::Const(2.0)),
                    )
                }
            }
            Expr::Pow(a, b) => {
                let da = a.diff(slot);
                let db = b.diff(slot);
                if let Some(c) = b.as_const() {
                    Expr::mul(
                        Expr::mul(
                            Expr::Const(c),
                            Expr::pow((**a).clone(), Expr::Const(c - 1.0)),
                        ),
                        da,
                    )
                } else if let Some(base) = a.as_const() {
                    Expr::mul(Expr::mul(self.clone(), Expr::Const(base.ln())), db)
                } else {
                    // u^v (v' ln u + v u'/u)
                    Expr::mul(
                        self.clone(),
                        Expr::add(
                            Expr::mul(db, Expr::call(Func::Ln, (**a).clone())),
                            Expr::div(Expr::mul((**b).clone(), da), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let da = a.diff(slot);
                if da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                let u = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, u),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, u)),
                    Func::Tan => Expr::pow(Expr::call(Func::Cos, u), Expr::Const(-2.0)),
                    Func::Asin => Expr::pow(
                        Expr::sub(Expr::Const(1.0), Expr::pow(u, Expr::Const(2.0))),
                        Expr::Const(-0.5),
                    ),
                    Func::Acos => Expr::neg(Expr::pow(
                        Expr::sub(Expr::Const(1.0), Expr::pow(u, Expr::Const(2.0))),
                        Expr::Const(-0.5),
                    )),
                    Func::Atan => Expr::div(
                        Expr::Const(1.0),
                        Expr::add(Expr::Const(1.0), Expr::pow(u, Expr::Const(2.0))),
                    ),
                    Func::Sinh => Expr::call(Func::Cosh, u),
                    Func::Cosh => Expr::call(Func::Sinh, u),
                    Func::Tanh => Expr::pow(Expr::call(Func::Cosh, u), Expr::Const(-2.0)),
                    Func::Asinh => Expr::pow(
                        Expr::add(Expr::pow(u, Expr::Const(2.0)), Expr::Const(1.0)),
                        Expr::Const(-0.5),
                    ),
                    Func::Acosh => Expr::pow(
                        Expr::sub(Expr::pow(u, Expr::Const(2.0)), Expr::Const(1.0)),
                        Expr::Const(-0.5),
                    ),
                    Func::Atanh => Expr::div(
                        Expr::Const(1.0),
                        Expr::sub(Expr::Const(1.0), Expr::pow(u, Expr::Const(2.0))),
                    ),
                    Func::Exp => Expr::call(Func::Exp, u),
                    Func::Ln => Expr::div(Expr::Const(1.0), u),
                    Func::Sqrt => Expr::div(
                        Expr::Const(0.5),
                        Expr::call(Func::Sqrt, u),
                    ),
                    Func::Abs => Expr::call(Func::Sign, u),
                    Func::Sign => Expr::Const(0.0),
                };
                Expr::mul(outer, da)
            }
        }
    }
}

// Integer exponents go through powi so that negative bases stay real.
fn const_pow(base: f64, c: f64) -> f64 {
    if c.fract() == 0.0 && c.abs() < 64.0 {
        base.powi(c as i32)
    } else {
        base.powf(c)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "${i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Token::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Token::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Token::RParen));
            i += 1;
        } else {
            return Err(Error::Parse {
                offset: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

/// Name resolution for the parser: coordinates map to variable slots,
/// bindings are substituted as already-built expressions.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    coordinates: Vec<String>,
    bindings: HashMap<String, Expr>,
}

impl Scope {
    pub fn new<S: AsRef<str>>(coordinates: &[S]) -> Self {
        Scope {
            coordinates: coordinates.iter().map(|s| s.as_ref().to_string()).collect(),
            bindings: HashMap::new(),
        }
    }

    /// Same bindings over different coordinates. Only meaningful when the
    /// bindings are constants, as parameters are.
    pub fn rebased<S: AsRef<str>>(&self, coordinates: &[S]) -> Scope {
        Scope {
            coordinates: coordinates.iter().map(|s| s.as_ref().to_string()).collect(),
            bindings: self.bindings.clone(),
        }
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn bind(&mut self, name: &str, expr: Expr) {
        self.bindings.insert(name.to_string(), expr);
    }

    pub fn bind_value(&mut self, name: &str, value: f64) {
        self.bind(name, Expr::Const(value));
    }

    /// Parses `src` and binds the result under `name`.
    pub fn define(&mut self, name: &str, src: &str) -> Result<()> {
        let e = self.parse(src)?;
        self.bind(name, e);
        Ok(())
    }

    pub fn parse(&self, src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            scope: self,
            len: src.len(),
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse {
                offset: p.offset(),
                message: "trailing input".into(),
            });
        }
        Ok(e)
    }

    fn resolve(&self, name: &str) -> Option<Expr> {
        if let Some(i) = self.coordinates.iter().position(|c| c == name) {
            return Some(Expr::Var(i));
        }
        if let Some(e) = self.bindings.get(name) {
            return Some(e.clone());
        }
        match name {
            "pi" => Some(Expr::Const(std::f64::consts::PI)),
            "e" => Some(Expr::Const(std::f64::consts::E)),
            _ => None,
        }
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    scope: &'a Scope,
    len: usize,
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.0).unwrap_or(self.len)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c)) = self.peek() {
            let c = *c;
            if c != '+' && c != '-' {
                break;
            }
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::add(lhs, rhs) } else { Expr::sub(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c)) = self.peek() {
            let c = *c;
            if c != '*' && c != '/' {
                break;
            }
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::mul(lhs, rhs) } else { Expr::div(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::neg(self.unary()?))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Token::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Token::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Token::Ident(name) => {
                self.pos += 1;
                if self.peek() == Some(&Token::LParen) {
                    let Some(func) = Func::from_name(&name) else {
                        self.pos -= 1;
                        return self.err(format!("unknown function `{name}`"));
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Token::RParen) {
                        return self.err("expected `)` after function argument");
                    }
                    self.pos += 1;
                    return Ok(Expr::call(func, arg));
                }
                match self.scope.resolve(&name) {
                    Some(e) => Ok(e),
                    None => {
                        self.pos -= 1;
                        self.err(format!("unknown identifier `{name}`"))
                    }
                }
            }
            Token::Op(c) => self.err(format!("unexpected operator `{c}`")),
            Token::RParen => self.err("unexpected `)`"),
        }
    }
}
