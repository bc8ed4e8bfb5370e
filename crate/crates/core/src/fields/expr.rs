//! Arithmetic formulas over `t`, `x`, `y` and named scenario parameters.
//!
//! Grammar (standard precedence, `^` right-associative and tightest):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] power
//! power  := atom ['^' factor]
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Parameters are bound when the text is parsed; the tree keeps their
//! names so that printing and re-parsing reproduces the same tree.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
    }

    /// The spatial variable along `axis` (0 → x, 1 → y).
    pub fn space(axis: usize) -> Var {
        match axis {
            0 => Var::X,
            1 => Var::Y,
            _ => panic!("no spatial variable for axis {axis}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Var),
    Param { name: String, value: f64 },
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed formula. Evaluation is a pure function of `(t, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

pub fn parse_expression(text: &str, params: &BTreeMap<String, f64>) -> Result<Expression> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 1,
            message: "empty expression".into(),
        });
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        params,
    };
    let root = parser.expr()?;
    match parser.peek() {
        (Tok::End, _) => Ok(Expression { root }),
        (tok, off) => Err(Error::Syntax {
            offset: off + 1,
            message: format!("unexpected {}", tok.describe()),
        }),
    }
}

impl Expression {
    pub fn constant(value: f64) -> Expression {
        Expression {
            root: num(value),
        }
    }

    pub fn var(v: Var) -> Expression {
        Expression { root: Node::Var(v) }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        eval_node(&self.root, [t, x, y])
    }

    pub fn depends_on(&self, v: Var) -> bool {
        depends(&self.root, v)
    }

    /// Value when the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if [Var::T, Var::X, Var::Y].iter().any(|&v| self.depends_on(v)) {
            None
        } else {
            Some(self.eval(0.0, 0.0, 0.0))
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn derivative(&self, v: Var) -> Result<Expression> {
        let d = diff(&self.root, v)?;
        Ok(Expression { root: simplify(d) })
    }

    pub fn simplified(&self) -> Expression {
        Expression {
            root: simplify(self.root.clone()),
        }
    }

    /// Replace every occurrence of `v` by `with`.
    pub fn substitute(&self, v: Var, with: &Expression) -> Expression {
        Expression {
            root: subst(&self.root, v, &with.root),
        }
    }

    pub fn contains_abs(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Call(Func::Abs, _) => true,
                Node::Call(_, a) | Node::Neg(a) => walk(a),
                Node::Bin(_, l, r) => walk(l) || walk(r),
                _ => false,
            }
        }
        walk(&self.root)
    }

    fn combine(op: BinOp, a: &Expression, b: &Expression) -> Expression {
        Expression {
            root: simplify(Node::Bin(op, Box::new(a.root.clone()), Box::new(b.root.clone()))),
        }
    }

    pub fn add(&self, other: &Expression) -> Expression {
        Self::combine(BinOp::Add, self, other)
    }

    pub fn sub(&self, other: &Expression) -> Expression {
        Self::combine(BinOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Expression) -> Expression {
        Self::combine(BinOp::Mul, self, other)
    }

    pub fn scale(&self, c: f64) -> Expression {
        Self::combine(BinOp::Mul, &Expression::constant(c), self)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root)
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::End => "end of input".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
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
                let v: f64 = s.parse().map_err(|_| Error::Syntax {
                    offset: start + 1,
                    message: format!("malformed number `{s}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    offset: start + 1,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap()),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> (&Tok, usize) {
        let (t, o) = &self.tokens[self.pos];
        (t, *o)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self) -> Result<T> {
        let (tok, off) = self.peek();
        Err(Error::Syntax {
            offset: off + 1,
            message: format!("unexpected {}", tok.describe()),
        })
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().0 {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        if *self.peek().0 == Tok::Minus {
            self.bump();
            let inner = self.power()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if *self.peek().0 == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().0.clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek().0 != Tok::RParen {
                    return self.unexpected();
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                if *self.peek().0 == Tok::LParen {
                    let func = Func::from_name(&name).ok_or_else(|| Error::UnknownIdentifier {
                        name: name.clone(),
                        offset: offset + 1,
                    })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek().0 == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    if *self.peek().0 != Tok::RParen {
                        return self.unexpected();
                    }
                    self.bump();
                    if args.len() != 1 {
                        return Err(Error::Arity {
                            name,
                            expected: 1,
                            found: args.len(),
                        });
                    }
                    return Ok(Node::Call(func, Box::new(args.pop().unwrap())));
                }
                match name.as_str() {
                    "t" => Ok(Node::Var(Var::T)),
                    "x" => Ok(Node::Var(Var::X)),
                    "y" => Ok(Node::Var(Var::Y)),
                    "pi" => Ok(Node::Pi),
                    _ => {
                        if Func::from_name(&name).is_some() {
                            return Err(Error::Arity {
                                name,
                                expected: 1,
                                found: 0,
                            });
                        }
                        match self.params.get(&name) {
                            Some(&value) => Ok(Node::Param { name, value }),
                            None => Err(Error::UnknownIdentifier {
                                name,
                                offset: offset + 1,
                            }),
                        }
                    }
                }
            }
            _ => self.unexpected(),
        }
    }
}

// ---------------------------------------------------------------- evaluation

fn eval_node(n: &Node, vars: [f64; 3]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Pi => std::f64::consts::PI,
        Node::Var(v) => vars[*v as usize],
        Node::Param { value, .. } => *value,
        Node::Neg(a) => -eval_node(a, vars),
        Node::Bin(op, l, r) => {
            let a = eval_node(l, vars);
            let b = eval_node(r, vars);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => pow(a, b),
            }
        }
        Node::Call(f, a) => f.apply(eval_node(a, vars)),
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == b.trunc() && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn depends(n: &Node, v: Var) -> bool {
    match n {
        Node::Var(w) => *w == v,
        Node::Num(_) | Node::Pi | Node::Param { .. } => false,
        Node::Neg(a) | Node::Call(_, a) => depends(a, v),
        Node::Bin(_, l, r) => depends(l, v) || depends(r, v),
    }
}

fn subst(n: &Node, v: Var, with: &Node) -> Node {
    match n {
        Node::Var(w) if *w == v => with.clone(),
        Node::Num(_) | Node::Pi | Node::Param { .. } | Node::Var(_) => n.clone(),
        Node::Neg(a) => Node::Neg(Box::new(subst(a, v, with))),
        Node::Call(f, a) => Node::Call(*f, Box::new(subst(a, v, with))),
        Node::Bin(op, l, r) => Node::Bin(*op, Box::new(subst(l, v, with)), Box::new(subst(r, v, with))),
    }
}

// ---------------------------------------------------------------- calculus

fn num(v: f64) -> Node {
    if v < 0.0 {
        Node::Neg(Box::new(Node::Num(-v)))
    } else {
        Node::Num(v)
    }
}

fn bin(op: BinOp, l: Node, r: Node) -> Node {
    Node::Bin(op, Box::new(l), Box::new(r))
}

fn diff(n: &Node, v: Var) -> Result<Node> {
    if !depends(n, v) {
        return Ok(Node::Num(0.0));
    }
    Ok(match n {
        Node::Var(_) => Node::Num(1.0),
        Node::Num(_) | Node::Pi | Node::Param { .. } => Node::Num(0.0),
        Node::Neg(a) => Node::Neg(Box::new(diff(a, v)?)),
        Node::Bin(op, l, r) => {
            let (a, b) = (l.as_ref().clone(), r.as_ref().clone());
            let da = diff(l, v)?;
            let db = diff(r, v)?;
            match op {
                BinOp::Add => bin(BinOp::Add, da, db),
                BinOp::Sub => bin(BinOp::Sub, da, db),
                BinOp::Mul => bin(BinOp::Add, bin(BinOp::Mul, da, b), bin(BinOp::Mul, a, db)),
                BinOp::Div => bin(
                    BinOp::Div,
                    bin(BinOp::Sub, bin(BinOp::Mul, da, b.clone()), bin(BinOp::Mul, a, db)),
                    bin(BinOp::Pow, b, Node::Num(2.0)),
                ),
                BinOp::Pow => {
                    if !depends(r, v) {
                        // d(a^b) = b a^(b-1) a'
                        bin(
                            BinOp::Mul,
                            bin(
                                BinOp::Mul,
                                b.clone(),
                                bin(BinOp::Pow, a, bin(BinOp::Sub, b, Node::Num(1.0))),
                            ),
                            da,
                        )
                    } else {
                        // d(a^b) = a^b (b' ln a + b a'/a)
                        let ln_a = Node::Call(Func::Log, Box::new(a.clone()));
                        bin(
                            BinOp::Mul,
                            n.clone(),
                            bin(
                                BinOp::Add,
                                bin(BinOp::Mul, db, ln_a),
                                bin(BinOp::Div, bin(BinOp::Mul, b, da), a),
                            ),
                        )
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let da = diff(a, v)?;
            let inner = a.as_ref().clone();
            let outer = match f {
                Func::Sin => Node::Call(Func::Cos, Box::new(inner)),
                Func::Cos => Node::Neg(Box::new(Node::Call(Func::Sin, Box::new(inner)))),
                Func::Exp => Node::Call(Func::Exp, Box::new(inner)),
                Func::Log => bin(BinOp::Div, Node::Num(1.0), inner),
                Func::Sqrt => bin(
                    BinOp::Div,
                    Node::Num(1.0),
                    bin(BinOp::Mul, Node::Num(2.0), Node::Call(Func::Sqrt, Box::new(inner))),
                ),
                Func::Abs => {
                    return Err(Error::NotDifferentiable(format!(
                        "abs(...) depends on {}",
                        v.name()
                    )))
                }
            };
            bin(BinOp::Mul, outer, da)
        }
    })
}

fn as_num(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        Node::Neg(a) => match a.as_ref() {
            Node::Num(v) => Some(-*v),
            _ => None,
        },
        _ => None,
    }
}

fn simplify(n: Node) -> Node {
    match n {
        Node::Neg(a) => {
            let a = simplify(*a);
            if let Some(v) = as_num(&a) {
                return num(-v);
            }
            match a {
                Node::Neg(inner) => *inner,
                other => Node::Neg(Box::new(other)),
            }
        }
        Node::Call(f, a) => {
            let a = simplify(*a);
            match as_num(&a).map(|v| f.apply(v)) {
                Some(v) if v.is_finite() => num(v),
                _ => Node::Call(f, Box::new(a)),
            }
        }
        Node::Bin(op, l, r) => {
            let l = simplify(*l);
            let r = simplify(*r);
            let (ln, rn) = (as_num(&l), as_num(&r));
            if let (Some(a), Some(b)) = (ln, rn) {
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                };
                if v.is_finite() {
                    return num(v);
                }
            }
            match op {
                BinOp::Add if ln == Some(0.0) => r,
                BinOp::Add | BinOp::Sub if rn == Some(0.0) => l,
                BinOp::Sub if ln == Some(0.0) => simplify(Node::Neg(Box::new(r))),
                BinOp::Mul if ln == Some(0.0) || rn == Some(0.0) => Node::Num(0.0),
                BinOp::Mul if ln == Some(1.0) => r,
                BinOp::Mul | BinOp::Div if rn == Some(1.0) => l,
                BinOp::Mul if ln == Some(-1.0) => simplify(Node::Neg(Box::new(r))),
                BinOp::Mul if rn == Some(-1.0) => simplify(Node::Neg(Box::new(l))),
                BinOp::Div if ln == Some(0.0) => Node::Num(0.0),
                BinOp::Pow if rn == Some(1.0) => l,
                BinOp::Pow if rn == Some(0.0) => Node::Num(1.0),
                _ => bin(op, l, r),
            }
        }
        other => other,
    }
}

// ---------------------------------------------------------------- printing

fn precedence(n: &Node) -> u8 {
    match n {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, n: &Node, min_prec: u8) -> fmt::Result {
    if precedence(n) < min_prec {
        write!(f, "(")?;
        write_node(f, n)?;
        write!(f, ")")
    } else {
        write_node(f, n)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, n: &Node) -> fmt::Result {
    match n {
        Node::Num(v) => {
            if *v < 0.0 {
                write!(f, "(-{})", -v)
            } else {
                write!(f, "{v}")
            }
        }
        Node::Pi => write!(f, "pi"),
        Node::Var(v) => write!(f, "{}", v.name()),
        Node::Param { name, .. } => write!(f, "{name}"),
        Node::Neg(a) => {
            write!(f, "-")?;
            write_wrapped(f, a, 4)
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a)?;
            write!(f, ")")
        }
        Node::Bin(op, l, r) => {
            let (sym, p) = match op {
                BinOp::Add => (" + ", 1),
                BinOp::Sub => (" - ", 1),
                BinOp::Mul => ("*", 2),
                BinOp::Div => ("/", 2),
                BinOp::Pow => ("^", 4),
            };
            if *op == BinOp::Pow {
                write_wrapped(f, l, 5)?;
                write!(f, "{sym}")?;
                return write_wrapped(f, r, 3);
            }
            write_wrapped(f, l, p)?;
            write!(f, "{sym}")?;
            write_wrapped(f, r, p + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expression {
        parse_expression(s, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn evaluates_with_precedence() {
        assert_eq!(p("1 + 0.5*cos(2*pi*x)").eval(0.0, 0.0, 0.0), 1.5);
        assert_eq!(p("2^3*x").eval(0.0, 1.0, 0.0), 8.0);
        assert_eq!(p("2^3^2").eval(0.0, 0.0, 0.0), 512.0);
        assert_eq!(p("-2^2").eval(0.0, 0.0, 0.0), -4.0);
        assert_eq!(p("2^-1").eval(0.0, 0.0, 0.0), 0.5);
        assert_eq!(p("8/2/2").eval(0.0, 0.0, 0.0), 2.0);
        assert_eq!(p("1-2-3").eval(0.0, 0.0, 0.0), -4.0);
        assert_eq!(p("3*-x").eval(0.0, 2.0, 0.0), -6.0);
        assert_eq!(p("1.5e-1 + y").eval(0.0, 0.0, 1.0), 1.15);
    }

    #[test]
    fn reports_syntax_errors_with_offsets() {
        let err = parse_expression("sin(pi", &BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            Error::Syntax {
                offset: 7,
                message: "unexpected end of input".into()
            }
        );
        assert!(matches!(
            parse_expression("1 + * 2", &BTreeMap::new()),
            Err(Error::Syntax { offset: 5, .. })
        ));
        assert!(matches!(
            parse_expression("--x", &BTreeMap::new()),
            Err(Error::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse_expression("  ", &BTreeMap::new()), Err(Error::Syntax { .. })));
    }

    #[test]
    fn rejects_unknown_identifiers_and_bad_arity() {
        match parse_expression("1 + beta*x", &BTreeMap::new()) {
            Err(Error::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "beta");
                assert_eq!(offset, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_expression("foo(x)", &BTreeMap::new()),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("sin(x, y)", &BTreeMap::new()),
            Err(Error::Arity { expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            parse_expression("cos + 1", &BTreeMap::new()),
            Err(Error::Arity { found: 0, .. })
        ));
    }

    #[test]
    fn binds_parameters() {
        let mut params = BTreeMap::new();
        params.insert("amp".to_string(), 0.25);
        let e = parse_expression("1 + amp*x", &params).unwrap();
        assert_eq!(e.eval(0.0, 2.0, 0.0), 1.5);
        assert_eq!(e.to_string(), "1 + amp*x");
    }

    #[test]
    fn differentiates_symbolically() {
        let q = p("cos(2*pi*x)");
        let dq = q.derivative(Var::X).unwrap();
        let d2q = dq.derivative(Var::X).unwrap();
        for &x in &[0.0, 0.1, 0.37, 0.8] {
            let w = 2.0 * std::f64::consts::PI;
            assert!((dq.eval(0.0, x, 0.0) + w * (w * x).sin()).abs() < 1e-12);
            assert!((d2q.eval(0.0, x, 0.0) + w * w * (w * x).cos()).abs() < 1e-10);
        }
        assert_eq!(q.derivative(Var::Y).unwrap().as_constant(), Some(0.0));
        let g = p("x^x");
        let dg = g.derivative(Var::X).unwrap();
        let x: f64 = 1.3;
        assert!((dg.eval(0.0, x, 0.0) - x.powf(x) * (x.ln() + 1.0)).abs() < 1e-12);
        assert!(matches!(
            p("abs(x)").derivative(Var::X),
            Err(Error::NotDifferentiable(_))
        ));
    }

    #[test]
    fn substitutes_variables() {
        let e = p("y^2 + x");
        let s = e.substitute(Var::Y, &Expression::var(Var::X));
        assert_eq!(s.eval(0.0, 3.0, 100.0), 12.0);
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|v| Node::Num(v as f64 / 8.0)),
            Just(Node::Pi),
            Just(Node::Var(Var::T)),
            Just(Node::Var(Var::X)),
            Just(Node::Var(Var::Y)),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (inner.clone(), inner.clone(), 0..5usize).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                    Node::Bin(op, Box::new(a), Box::new(b))
                }),
                (inner, 0..6usize).prop_map(|(a, k)| {
                    let f = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs][k];
                    Node::Call(f, Box::new(a))
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(node in arb_node()) {
            let e = Expression { root: node };
            let printed = e.to_string();
            let back = parse_expression(&printed, &BTreeMap::new()).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
