//! Scalar expression DSL: parse and evaluate metric components and
//! conformal factors over jet arithmetic.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" int)?
//! atom   := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! Identifiers `x1`…`xn` are the chart variables, `pi` is a built-in
//! constant, `exp log sin cos sqrt` are functions, and any other
//! identifier is a named parameter bound at evaluation time.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::jets::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// Chart variable, 0-based (source form `x1`…`xn`).
    Var(usize),
    Param(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

/// A parsed expression validated against a chart dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    dim: usize,
    root: Node,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integral: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, msg: impl Into<String>, offset: usize) -> Error {
        Error::Parse {
            msg: msg.into(),
            offset,
        }
    }

    fn next_token(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' => {
                let mut end = self.pos;
                let mut integral = true;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
                if end < self.src.len() && self.src[end] == b'.' {
                    integral = false;
                    end += 1;
                    while end < self.src.len() && self.src[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    integral = false;
                    let mut probe = end + 1;
                    if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-')
                    {
                        probe += 1;
                    }
                    if probe >= self.src.len() || !self.src[probe].is_ascii_digit() {
                        return Err(self.err("malformed exponent in number literal", end));
                    }
                    end = probe;
                    while end < self.src.len() && self.src[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text
                    .parse()
                    .map_err(|_| self.err(format!("invalid number `{text}`"), start))?;
                self.pos = end;
                return Ok((Tok::Num { value, integral }, start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                self.pos = end;
                return Ok((Tok::Ident(text), start));
            }
            other => {
                return Err(self.err(format!("unexpected character `{}`", other as char), start))
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    tok_offset: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, dim: usize) -> Result<Self> {
        let mut lexer = Lexer::new(src);
        let (tok, tok_offset) = lexer.next_token()?;
        Ok(Parser {
            lexer,
            tok,
            tok_offset,
            dim,
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            msg: msg.into(),
            offset: self.tok_offset,
        }
    }

    fn advance(&mut self) -> Result<()> {
        let (tok, off) = self.lexer.next_token()?;
        self.tok = tok;
        self.tok_offset = off;
        Ok(())
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.advance()?;
        let mut sign = 1i32;
        if self.tok == Tok::Minus {
            sign = -1;
            self.advance()?;
        }
        match self.tok {
            Tok::Num { value, integral } => {
                if !integral || value.fract() != 0.0 || value.abs() > i32::MAX as f64 {
                    return Err(self.err("exponent must be an integer literal"));
                }
                let k = sign * value as i32;
                self.advance()?;
                Ok(Node::Pow(Box::new(base), k))
            }
            _ => Err(self.err("exponent must be an integer literal")),
        }
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tok.clone() {
            Tok::Num { value, .. } => {
                self.advance()?;
                Ok(Node::Num(value))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.err("expected `)`"));
                }
                self.advance()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let ident_offset = self.tok_offset;
                self.advance()?;
                if self.tok == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(Error::Parse {
                        msg: format!("unknown function `{name}`"),
                        offset: ident_offset,
                    })?;
                    self.advance()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::RParen {
                        return Err(self.err("expected `)`"));
                    }
                    self.advance()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                if let Some(idx) = variable_index(&name) {
                    if idx == 0 || idx > self.dim {
                        return Err(Error::Parse {
                            msg: format!(
                                "variable `{name}` out of range for dimension {}",
                                self.dim
                            ),
                            offset: ident_offset,
                        });
                    }
                    return Ok(Node::Var(idx - 1));
                }
                Ok(Node::Param(name))
            }
            Tok::End => Err(self.err("unexpected end of expression")),
            other => Err(self.err(format!("unexpected token {other:?}"))),
        }
    }
}

/// `x<k>` with k all digits → Some(k); anything else is not a variable.
fn variable_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('x')?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Parse `src` against a chart of dimension `dim`.
pub fn parse(src: &str, dim: usize) -> Result<Expression> {
    if src.trim().is_empty() {
        return Err(Error::Parse {
            msg: "empty expression".into(),
            offset: 0,
        });
    }
    let mut p = Parser::new(src, dim)?;
    let root = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.err("trailing input after expression"));
    }
    Ok(Expression { dim, root })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

impl Expression {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Names of all parameters the expression references.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(node: &Node, out: &mut Vec<String>) {
            match node {
                Node::Param(name) => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a, out),
                Node::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Node::Num(_) | Node::Var(_) => {}
            }
        }
        walk(&self.root, &mut out);
        out.sort();
        out
    }

    /// The jet of the expression about `base`, truncated at `order`.
    pub fn eval_jet(
        &self,
        base: &[f64],
        order: usize,
        params: &BTreeMap<String, f64>,
    ) -> Result<Jet> {
        if base.len() != self.dim {
            return Err(Error::DimMismatch(base.len(), self.dim));
        }
        self.eval_node(&self.root, base, order, params)
    }

    fn eval_node(
        &self,
        node: &Node,
        base: &[f64],
        order: usize,
        params: &BTreeMap<String, f64>,
    ) -> Result<Jet> {
        let dim = self.dim;
        Ok(match node {
            Node::Num(c) => Jet::constant(*c, dim, order),
            // At order 0 the coordinate function degenerates to its value.
            Node::Var(i) => {
                if order == 0 {
                    Jet::constant(base[*i], dim, order)
                } else {
                    Jet::variable(*i, base[*i], dim, order)?
                }
            }
            Node::Param(name) => {
                let value = params
                    .get(name)
                    .ok_or_else(|| Error::UnboundParam(name.clone()))?;
                Jet::constant(*value, dim, order)
            }
            Node::Neg(a) => -self.eval_node(a, base, order, params)?,
            Node::Bin(op, a, b) => {
                let ja = self.eval_node(a, base, order, params)?;
                let jb = self.eval_node(b, base, order, params)?;
                match op {
                    BinOp::Add => ja.try_add(&jb)?,
                    BinOp::Sub => ja.try_sub(&jb)?,
                    BinOp::Mul => ja.try_mul(&jb)?,
                    BinOp::Div => ja.try_div(&jb)?,
                }
            }
            Node::Pow(a, k) => self.eval_node(a, base, order, params)?.powi(*k)?,
            Node::Call(func, a) => {
                let ja = self.eval_node(a, base, order, params)?;
                match func {
                    Func::Exp => ja.exp(),
                    Func::Log => ja.ln()?,
                    Func::Sin => ja.sin(),
                    Func::Cos => ja.cos(),
                    Func::Sqrt => ja.sqrt()?,
                }
            }
        })
    }

    /// Plain pointwise evaluation (no jets).
    pub fn eval(&self, point: &[f64], params: &BTreeMap<String, f64>) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimMismatch(point.len(), self.dim));
        }
        fn go(node: &Node, point: &[f64], params: &BTreeMap<String, f64>) -> Result<f64> {
            Ok(match node {
                Node::Num(c) => *c,
                Node::Var(i) => point[*i],
                Node::Param(name) => *params
                    .get(name)
                    .ok_or_else(|| Error::UnboundParam(name.clone()))?,
                Node::Neg(a) => -go(a, point, params)?,
                Node::Bin(op, a, b) => {
                    let x = go(a, point, params)?;
                    let y = go(b, point, params)?;
                    match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => {
                            if y.abs() < crate::jets::DIV_EPS {
                                return Err(Error::DivisionByZero);
                            }
                            x / y
                        }
                    }
                }
                Node::Pow(a, k) => go(a, point, params)?.powi(*k),
                Node::Call(func, a) => {
                    let x = go(a, point, params)?;
                    match func {
                        Func::Exp => x.exp(),
                        Func::Log => {
                            if x <= 0.0 {
                                return Err(Error::Domain(format!("log of {x}")));
                            }
                            x.ln()
                        }
                        Func::Sin => x.sin(),
                        Func::Cos => x.cos(),
                        Func::Sqrt => {
                            if x < 0.0 {
                                return Err(Error::Domain(format!("sqrt of {x}")));
                            }
                            x.sqrt()
                        }
                    }
                }
            })
        }
        go(&self.root, point, params)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }
}

// ---------------------------------------------------------------------------
// Canonical printing
// ---------------------------------------------------------------------------

// Higher binds tighter; used to decide parenthesization.
fn precedence(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Pow(..) => 4,
        Node::Num(_) | Node::Var(_) | Node::Param(_) | Node::Call(..) => 5,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node) -> fmt::Result {
    match node {
        Node::Num(c) => write!(f, "{c}"),
        Node::Var(i) => write!(f, "x{}", i + 1),
        Node::Param(name) => write!(f, "{name}"),
        Node::Neg(a) => {
            write!(f, "-")?;
            write_child(f, a, 3, false)
        }
        Node::Bin(op, a, b) => {
            let (sym, prec) = match op {
                BinOp::Add => ("+", 1),
                BinOp::Sub => ("-", 1),
                BinOp::Mul => ("*", 2),
                BinOp::Div => ("/", 2),
            };
            write_child(f, a, prec, false)?;
            write!(f, " {sym} ")?;
            // left-associative: the right child needs parens at equal precedence
            write_child(f, b, prec, true)
        }
        Node::Pow(a, k) => {
            write_child(f, a, 5, false)?;
            write!(f, "^{k}")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a)?;
            write!(f, ")")
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, node: &Node, parent: u8, strict: bool) -> fmt::Result {
    let p = precedence(node);
    let need = if strict { p <= parent } else { p < parent };
    if need {
        write!(f, "(")?;
        write_node(f, node)?;
        write!(f, ")")
    } else {
        write_node(f, node)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root)
    }
}

/// Canonical source form of a bare AST node (what `Display` prints for a
/// whole expression); re-parsing it reproduces the node.
pub fn render(node: &Node) -> String {
    struct Wrap<'a>(&'a Node);
    impl fmt::Display for Wrap<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write_node(f, self.0)
        }
    }
    Wrap(node).to_string()
}
