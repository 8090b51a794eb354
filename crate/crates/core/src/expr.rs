//! Small arithmetic expression language for profiles and implicit domains.
//!
//! Grammar: `+ - * / ^`, parentheses, unary minus, numeric literals, the
//! variables `x y z` and the functions `abs min max sqrt`.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Abs,
    Min,
    Max,
    Sqrt,
}

const VARS: [&str; 3] = ["x", "y", "z"];

/// A parsed expression together with its source text.
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in {source:?}"
            )));
        }
        let arity = max_var(&root).map_or(0, |v| v + 1);
        Ok(Expr {
            source: source.to_string(),
            root,
            arity,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of leading variables referenced (x=1, y=2, z=3).
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Evaluates at `args`; variables beyond `args.len()` read as 0.
    pub fn eval(&self, args: &[f64]) -> f64 {
        eval(&self.root, args)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn max_var(n: &Node) -> Option<usize> {
    match n {
        Node::Num(_) => None,
        Node::Var(i) => Some(*i),
        Node::Neg(a) => max_var(a),
        Node::Bin(_, a, b) => max_var(a).max(max_var(b)),
        Node::Call(_, args) => args.iter().filter_map(max_var).max(),
    }
}

fn eval(n: &Node, args: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => args.get(*i).copied().unwrap_or(0.0),
        Node::Neg(a) => -eval(a, args),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, args), eval(b, args));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, xs) => match f {
            Func::Abs => eval(&xs[0], args).abs(),
            Func::Sqrt => eval(&xs[0], args).sqrt(),
            Func::Min => xs
                .iter()
                .map(|x| eval(x, args))
                .fold(f64::INFINITY, f64::min),
            Func::Max => xs
                .iter()
                .map(|x| eval(x, args))
                .fold(f64::NEG_INFINITY, f64::max),
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number {text:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self, c: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Tok::Sym(s)) if *s == c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(format!("expected {c:?}")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.peek_sym('+') {
                Op::Add
            } else if self.peek_sym('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_sym('*') {
                Op::Mul
            } else if self.peek_sym('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_sym('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek_sym('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left: -x^2 = -(x^2)
    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.peek_sym('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(i) = VARS.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let func = match name.as_str() {
                    "abs" => Func::Abs,
                    "min" => Func::Min,
                    "max" => Func::Max,
                    "sqrt" => Func::Sqrt,
                    _ => return Err(Error::Expression(format!("unknown identifier {name:?}"))),
                };
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while self.peek_sym(',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                let ok = match func {
                    Func::Abs | Func::Sqrt => args.len() == 1,
                    Func::Min | Func::Max => !args.is_empty(),
                };
                if !ok {
                    return Err(Error::Expression(format!(
                        "wrong number of arguments to {name}"
                    )));
                }
                Ok(Node::Call(func, args))
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, a: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(a)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert_eq!(ev("2 * -x", &[3.0]), -6.0);
    }

    #[test]
    fn functions_and_variables() {
        assert_eq!(ev("abs(x - 0.5)", &[0.25]), 0.25);
        assert_eq!(ev("min(x, y, 3)", &[5.0, 4.0]), 3.0);
        assert_eq!(ev("max(x, y)", &[1.0, 2.0]), 2.0);
        assert_eq!(ev("x^2 + y^2 - 1", &[0.6, 0.8]).abs() < 1e-15, true);
        assert_eq!(ev("1.5e-1 * 2E1", &[]), 3.0);
        assert_eq!(Expr::parse("y + 1").unwrap().arity(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("abs(1, 2)").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("(1").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let e = Expr::parse("1 - abs(x)").unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, "\"1 - abs(x)\"");
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back.eval(&[0.5]), 0.5);
    }
}
