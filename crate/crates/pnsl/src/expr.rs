//! Arithmetic and comparison expressions over decimal numbers.
//!
//! Integers stay integers (`7/2` is `3`, rounding toward negative infinity);
//! any float operand makes the result a float. Floats print in shortest
//! round-trip form with a decimal point or exponent, so `6.0` stays a float.
//! Comparisons and logic yield `1` or `0`.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn as_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }

    fn truthy(self) -> bool {
        self.as_f64() != 0.0
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Int(i) => write!(f, "{i}"),
            Num::Float(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error in expression `{expr}`: {message}")]
    Syntax { expr: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

/// Parses a number the way scripts write them: optional sign, decimal digits,
/// optional fraction and exponent.
pub fn parse_num(s: &str) -> Option<Num> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
    if !digits.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if digits.bytes().all(|b| b.is_ascii_digit()) {
        return t.parse().ok().map(Num::Int);
    }
    if !digits.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+')) {
        return None;
    }
    t.parse::<f64>().ok().filter(|f| f.is_finite()).map(Num::Float)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Num),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

const OPS: [&str; 15] = ["||", "&&", "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "%", "!", "?"];

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let b = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && b.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    i = j;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            out.push(Tok::Num(parse_num(text).ok_or_else(|| format!("bad number `{text}`"))?));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
            continue;
        }
        match c {
            '(' => out.push(Tok::LParen),
            ')' => out.push(Tok::RParen),
            ',' => out.push(Tok::Comma),
            _ => {
                let op = OPS
                    .iter()
                    .find(|op| src[i..].starts_with(**op) && **op != "?")
                    .ok_or_else(|| format!("unexpected character `{c}`"))?;
                out.push(Tok::Op(op));
                i += op.len();
                continue;
            }
        }
        i += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Ast {
    Num(Num),
    Unary(&'static str, Box<Ast>),
    Binary(&'static str, Box<Ast>, Box<Ast>),
    Call(String, Vec<Ast>),
}

struct Parser {
    toks: Vec<Tok>,
    i: usize,
}

const LEVELS: [&[&str]; 6] = [&["||"], &["&&"], &["==", "!="], &["<", "<=", ">", ">="], &["+", "-"], &["*", "/", "%"]];

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i)
    }

    fn binary(&mut self, level: usize) -> Result<Ast, String> {
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            if !LEVELS[level].contains(&op) {
                break;
            }
            self.i += 1;
            let rhs = self.binary(level + 1)?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast, String> {
        if let Some(Tok::Op(op @ ("-" | "+" | "!"))) = self.peek() {
            let op = *op;
            self.i += 1;
            return Ok(Ast::Unary(op, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Ast, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of expression")?;
        self.i += 1;
        match tok {
            Tok::Num(n) => Ok(Ast::Num(n)),
            Tok::LParen => {
                let e = self.binary(0)?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err("missing `)`".into());
                }
                self.i += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() != Some(&Tok::LParen) {
                    return Err(format!("unknown operand `{name}`"));
                }
                self.i += 1;
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        args.push(self.binary(0)?);
                        match self.peek() {
                            Some(Tok::Comma) => self.i += 1,
                            Some(Tok::RParen) => break,
                            _ => return Err("expected `,` or `)`".into()),
                        }
                    }
                }
                self.i += 1;
                Ok(Ast::Call(name, args))
            }
            other => Err(format!("unexpected {other:?}")),
        }
    }
}

fn float(x: f64) -> Result<Num, ExprError> {
    if x.is_finite() {
        Ok(Num::Float(x))
    } else {
        Err(ExprError::Runtime("floating-point result out of range".into()))
    }
}

fn int_op(op: &str, a: i64, b: i64) -> Result<Num, ExprError> {
    let overflow = || ExprError::Runtime("integer overflow".into());
    Ok(Num::Int(match op {
        "+" => a.checked_add(b).ok_or_else(overflow)?,
        "-" => a.checked_sub(b).ok_or_else(overflow)?,
        "*" => a.checked_mul(b).ok_or_else(overflow)?,
        "/" | "%" if b == 0 => return Err(ExprError::Runtime("divide by zero".into())),
        "/" => a.checked_div_euclid(b).ok_or_else(overflow).map(|q| if b < 0 && a.rem_euclid(b) != 0 { q - 1 } else { q })?,
        "%" => {
            let r = a.checked_rem(b).ok_or_else(overflow)?;
            if r != 0 && (r < 0) != (b < 0) {
                r + b
            } else {
                r
            }
        }
        _ => unreachable!(),
    }))
}

fn call(name: &str, args: &[Num]) -> Result<Num, ExprError> {
    let f = |i: usize| args[i].as_f64();
    let arity = match name {
        "pow" | "atan2" | "hypot" | "fmod" => 2,
        "min" | "max" => args.len().max(1),
        _ => 1,
    };
    if args.len() != arity {
        return Err(ExprError::Runtime(format!("{name}() takes {arity} argument(s)")));
    }
    match name {
        "abs" => Ok(match args[0] {
            Num::Int(i) => Num::Int(i.checked_abs().ok_or_else(|| ExprError::Runtime("integer overflow".into()))?),
            Num::Float(x) => Num::Float(x.abs()),
        }),
        "int" => {
            let x = f(0).trunc();
            if x.abs() < 9.2e18 {
                Ok(Num::Int(x as i64))
            } else {
                Err(ExprError::Runtime("integer overflow".into()))
            }
        }
        "round" => call("int", &[Num::Float(f(0).round())]),
        "double" => float(f(0)),
        "min" | "max" => {
            let pick = |a: Num, b: Num| {
                let take_b = if name == "min" { b.as_f64() < a.as_f64() } else { b.as_f64() > a.as_f64() };
                if take_b {
                    b
                } else {
                    a
                }
            };
            Ok(args[1..].iter().fold(args[0], |a, &b| pick(a, b)))
        }
        "sqrt" if f(0) < 0.0 => Err(ExprError::Runtime("domain error: sqrt of a negative number".into())),
        "log" | "log10" if f(0) <= 0.0 => Err(ExprError::Runtime(format!("domain error: {name} of a non-positive number"))),
        "sqrt" => float(f(0).sqrt()),
        "sin" => float(f(0).sin()),
        "cos" => float(f(0).cos()),
        "tan" => float(f(0).tan()),
        "asin" => float(f(0).asin()),
        "acos" => float(f(0).acos()),
        "atan" => float(f(0).atan()),
        "exp" => float(f(0).exp()),
        "log" => float(f(0).ln()),
        "log10" => float(f(0).log10()),
        "floor" => float(f(0).floor()),
        "ceil" => float(f(0).ceil()),
        "pow" => float(f(0).powf(f(1))),
        "atan2" => float(f(0).atan2(f(1))),
        "hypot" => float(f(0).hypot(f(1))),
        "fmod" if f(1) == 0.0 => Err(ExprError::Runtime("divide by zero".into())),
        "fmod" => float(f(0) % f(1)),
        _ => Err(ExprError::Runtime(format!("unknown function {name}()"))),
    }
}

fn eval(ast: &Ast) -> Result<Num, ExprError> {
    match ast {
        Ast::Num(n) => Ok(*n),
        Ast::Unary(op, e) => {
            let v = eval(e)?;
            match (*op, v) {
                ("!", v) => Ok(Num::Int(!v.truthy() as i64)),
                ("+", v) => Ok(v),
                (_, Num::Int(i)) => i.checked_neg().map(Num::Int).ok_or_else(|| ExprError::Runtime("integer overflow".into())),
                (_, Num::Float(x)) => Ok(Num::Float(-x)),
            }
        }
        Ast::Binary("&&", a, b) => Ok(Num::Int((eval(a)?.truthy() && eval(b)?.truthy()) as i64)),
        Ast::Binary("||", a, b) => Ok(Num::Int((eval(a)?.truthy() || eval(b)?.truthy()) as i64)),
        Ast::Binary(op, a, b) => {
            let (x, y) = (eval(a)?, eval(b)?);
            let cmp = |r: bool| Ok(Num::Int(r as i64));
            match *op {
                "==" => cmp(x.as_f64() == y.as_f64()),
                "!=" => cmp(x.as_f64() != y.as_f64()),
                "<" => cmp(x.as_f64() < y.as_f64()),
                "<=" => cmp(x.as_f64() <= y.as_f64()),
                ">" => cmp(x.as_f64() > y.as_f64()),
                ">=" => cmp(x.as_f64() >= y.as_f64()),
                _ => match (x, y) {
                    (Num::Int(a), Num::Int(b)) => int_op(op, a, b),
                    _ => {
                        let (a, b) = (x.as_f64(), y.as_f64());
                        match *op {
                            "+" => float(a + b),
                            "-" => float(a - b),
                            "*" => float(a * b),
                            "/" if b == 0.0 => Err(ExprError::Runtime("divide by zero".into())),
                            "/" => float(a / b),
                            _ => Err(ExprError::Runtime("can't use floating-point value as operand of %".into())),
                        }
                    }
                },
            }
        }
        Ast::Call(name, args) => {
            let vals = args.iter().map(eval).collect::<Result<Vec<_>, _>>()?;
            call(name, &vals)
        }
    }
}

/// Evaluates an already substituted expression.
pub fn evaluate(src: &str) -> Result<Num, ExprError> {
    let syntax = |message: String| ExprError::Syntax { expr: src.to_string(), message };
    let toks = lex(src).map_err(syntax)?;
    if toks.is_empty() {
        return Err(syntax("empty expression".into()));
    }
    let mut p = Parser { toks, i: 0 };
    let ast = p.binary(0).map_err(syntax)?;
    if p.i != p.toks.len() {
        return Err(syntax(format!("unexpected {:?}", p.toks[p.i])));
    }
    eval(&ast)
}
