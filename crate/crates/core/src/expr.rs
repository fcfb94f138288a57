//! Small arithmetic expression language for drift, diffusion and initial data.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, and the functions `sin cos tanh exp abs min max`.
//! Variables are bound by position when the expression is compiled.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Powi(Box<Node>, i32),
    Powf(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            _ => n == 1,
        }
    }
}

/// A compiled expression. Cheap to clone, `Send + Sync`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    vars: Vec<String>,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Compile `src`, binding `vars[k]` to argument slot `k` of [`Expr::eval`].
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected token {:?} in {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(Expr {
            source: src.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            root: fold(root),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluate with `args` in the order given at compile time.
    #[inline]
    pub fn eval(&self, args: &[f64]) -> f64 {
        eval(&self.root, args)
    }

    /// True if the expression never reads variable slot `k`.
    pub fn independent_of(&self, k: usize) -> bool {
        !uses(&self.root, k)
    }
}

fn uses(n: &Node, k: usize) -> bool {
    match n {
        Node::Num(_) => false,
        Node::Var(i) => *i == k,
        Node::Neg(a) | Node::Powi(a, _) => uses(a, k),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Powf(a, b) => {
            uses(a, k) || uses(b, k)
        }
        Node::Call(_, args) => args.iter().any(|a| uses(a, k)),
    }
}

fn eval(n: &Node, v: &[f64]) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a) => -eval(a, v),
        Node::Add(a, b) => eval(a, v) + eval(b, v),
        Node::Sub(a, b) => eval(a, v) - eval(b, v),
        Node::Mul(a, b) => eval(a, v) * eval(b, v),
        Node::Div(a, b) => eval(a, v) / eval(b, v),
        Node::Powi(a, k) => eval(a, v).powi(*k),
        Node::Powf(a, b) => eval(a, v).powf(eval(b, v)),
        Node::Call(f, args) => match f {
            Func::Sin => eval(&args[0], v).sin(),
            Func::Cos => eval(&args[0], v).cos(),
            Func::Tanh => eval(&args[0], v).tanh(),
            Func::Exp => eval(&args[0], v).exp(),
            Func::Abs => eval(&args[0], v).abs(),
            Func::Min => args
                .iter()
                .map(|a| eval(a, v))
                .fold(f64::INFINITY, f64::min),
            Func::Max => args
                .iter()
                .map(|a| eval(a, v))
                .fold(f64::NEG_INFINITY, f64::max),
        },
    }
}

fn is_const(n: &Node) -> Option<f64> {
    if let Node::Num(x) = n {
        Some(*x)
    } else {
        None
    }
}

// constant folding; leaves variable subtrees alone
fn fold(n: Node) -> Node {
    let folded = match n {
        Node::Neg(a) => Node::Neg(Box::new(fold(*a))),
        Node::Add(a, b) => Node::Add(Box::new(fold(*a)), Box::new(fold(*b))),
        Node::Sub(a, b) => Node::Sub(Box::new(fold(*a)), Box::new(fold(*b))),
        Node::Mul(a, b) => Node::Mul(Box::new(fold(*a)), Box::new(fold(*b))),
        Node::Div(a, b) => Node::Div(Box::new(fold(*a)), Box::new(fold(*b))),
        Node::Powi(a, k) => Node::Powi(Box::new(fold(*a)), k),
        Node::Powf(a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match is_const(&b) {
                Some(k) if k.fract() == 0.0 && k.abs() <= 64.0 => Node::Powi(Box::new(a), k as i32),
                _ => Node::Powf(Box::new(a), Box::new(b)),
            }
        }
        Node::Call(f, args) => Node::Call(f, args.into_iter().map(fold).collect()),
        other => other,
    };
    let all_const = match &folded {
        Node::Num(_) | Node::Var(_) => false,
        Node::Neg(a) | Node::Powi(a, _) => is_const(a).is_some(),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Powf(a, b) => {
            is_const(a).is_some() && is_const(b).is_some()
        }
        Node::Call(_, args) => args.iter().all(|a| is_const(a).is_some()),
    };
    if all_const {
        Node::Num(eval(&folded, &[]))
    } else {
        folded
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
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
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Expr(format!("bad number {text:?} in {src:?}")))?;
            out.push(Tok::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(ch) {
            out.push(Tok::Op(ch));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {ch:?} in {src:?}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!(
                "expected {op:?} at token {}, found {:?}",
                self.pos,
                self.tokens.get(self.pos)
            )))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // right associative; -x^2 parses as -(x^2)
    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Powf(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expr("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let f = Func::lookup(&name)
                        .ok_or_else(|| Error::Expr(format!("unknown function {name:?}")))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if !f.arity_ok(args.len()) {
                        return Err(Error::Expr(format!(
                            "{name} called with {} arguments",
                            args.len()
                        )));
                    }
                    return Ok(Node::Call(f, args));
                }
                if let Some(k) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(k));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expr(format!("unknown variable {name:?}"))),
                }
            }
            Tok::Op(c) => Err(Error::Expr(format!("unexpected {c:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64, c: f64) -> f64 {
        Expr::parse(src, &["x", "c"]).unwrap().eval(&[x, c])
    }

    #[test]
    fn precedence_and_assoc() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("(1 - 2) - 3", 0.0, 0.0), -4.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("x - x^3", 2.0, 0.0), -6.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("sin(pi/2) + cos(0)", 0.0, 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(ev("min(max(x + 0.5, 0), 1)", 0.7, 0.0), 1.0);
        assert_eq!(ev("min(max(x + 0.5, 0), 1)", -0.1, 0.0), 0.4);
        assert_eq!(ev("max(1, 2, 3)", 0.0, 0.0), 3.0);
        assert!((ev("exp(c) * tanh(x)", 0.3, 1.0) - 1f64.exp() * 0.3f64.tanh()).abs() < 1e-15);
        assert_eq!(ev("abs(-2.5e-1)", 0.0, 0.0), 0.25);
        assert!((ev("e", 0.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +", &["x"]).is_err());
        assert!(Expr::parse("foo(1)", &["x"]).is_err());
        assert!(Expr::parse("y", &["x"]).is_err());
        assert!(Expr::parse("sin(1, 2)", &["x"]).is_err());
        assert!(Expr::parse("(1", &["x"]).is_err());
        assert!(Expr::parse("1 # 2", &["x"]).is_err());
    }

    #[test]
    fn dependence() {
        let e = Expr::parse("1 + c", &["x", "c"]).unwrap();
        assert!(e.independent_of(0));
        assert!(!e.independent_of(1));
    }

    #[test]
    fn fractional_power() {
        assert!((ev("x ^ 0.5", 4.0, 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(ev("x ^ -1", 4.0, 0.0), 0.25);
    }
}
