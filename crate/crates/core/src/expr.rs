//! Arithmetic expressions for transition maps.
//!
//! Grammar, loosest to tightest:
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" integer)?
//! atom  := number | variable | ("sin" | "cos" | "exp") "(" expr ")" | "(" expr ")"
//! ```
//!
//! Binary operators are left-associative. A minus applied directly to a
//! numeric literal folds into a negative constant, which keeps
//! parse → print → parse stable.
//!
//! Expressions evaluate either at a point or over truncated series
//! ([`Expr::eval_jet`]), which gives exact jets without numerical
//! differentiation.

use std::fmt;

use thiserror::Error;

use crate::jet::{JetError, JetMap, Series};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at byte {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("expected {expected} arguments, found {found}")]
    Arity { expected: usize, found: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Index into the declared variable list.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    vars: Vec<String>,
    root: Node,
}

pub fn parse<S: AsRef<str>>(source: &str, variables: &[S]) -> Result<Expr, ExprError> {
    let vars: Vec<String> = variables.iter().map(|v| v.as_ref().to_owned()).collect();
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        vars: &vars,
        end: source.len(),
    };
    let root = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ExprError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind),
        });
    }
    Ok(Expr { vars, root })
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Integer(u32),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(x) => write!(f, "number {x}"),
            TokenKind::Integer(n) => write!(f, "number {n}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Op(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let mut integral = !source[start..i].contains('.');
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
                    integral = false;
                }
            }
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("number `{text}` is out of range"),
                });
            }
            let kind = match text.parse::<u32>() {
                Ok(n) if integral => TokenKind::Integer(n),
                _ => TokenKind::Number(value),
            };
            tokens.push(Token { kind, offset: start });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(source[start..i].to_owned()),
                offset: start,
            });
        } else if "+-*/^()".contains(c) {
            tokens.push(Token {
                kind: TokenKind::Op(c),
                offset: i,
            });
            i += 1;
        } else {
            let ch = source[i..].chars().next().unwrap_or(c);
            return Err(ExprError::Syntax {
                offset: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn next(&mut self) -> Result<Token, ExprError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or(ExprError::Syntax {
            offset: self.end,
            message: "unexpected end of input".into(),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect_op(&mut self, op: char) -> Result<(), ExprError> {
        let tok = self.next()?;
        if tok.kind == TokenKind::Op(op) {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("expected `{op}`, found {}", tok.kind),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
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

    fn term(&mut self) -> Result<Node, ExprError> {
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

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(match self.unary()? {
                Node::Const(c) => Node::Const(-c),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek_op() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        let tok = self.next()?;
        match tok.kind {
            TokenKind::Integer(n) => Ok(Node::Pow(Box::new(base), n)),
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("exponent must be a non-negative integer, found {other}"),
            }),
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let tok = self.next()?;
        match tok.kind {
            TokenKind::Number(x) => Ok(Node::Const(x)),
            TokenKind::Integer(n) => Ok(Node::Const(f64::from(n))),
            TokenKind::Op('(') => {
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let func = Func::from_name(&name).ok_or_else(|| ExprError::Syntax {
                        offset: tok.offset,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(ExprError::UndeclaredVariable { name, offset: tok.offset }),
                }
            }
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {other}"),
            }),
        }
    }
}

impl Expr {
    pub fn new(vars: Vec<String>, root: Node) -> Self {
        Self { vars, root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    /// Evaluates at a point given positionally in declared-variable order.
    pub fn eval_point(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                found: point.len(),
            });
        }
        eval_node(&self.root, point)
    }

    /// Exact order-`order` jet of the expression with every variable
    /// replaced by the corresponding component of `args`.
    pub fn eval_jet(&self, args: &JetMap, order: usize) -> Result<JetMap, ExprError> {
        let s = self.eval_series(args.components(), order)?;
        Ok(JetMap::new(vec![s])?)
    }

    pub fn eval_series(&self, args: &[Series], order: usize) -> Result<Series, ExprError> {
        if args.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                found: args.len(),
            });
        }
        let dim = match args.first() {
            Some(a) => a.dim(),
            // Constant expressions: a jet in zero variables is a bare scalar,
            // which is not a useful jet; callers always supply variables.
            None => return Err(ExprError::Arity { expected: 1, found: 0 }),
        };
        let truncated = args.iter().map(|a| a.truncate(order)).collect::<Result<Vec<_>, _>>()?;
        let out = series_node(&self.root, &truncated, dim, order)?;
        out.finite().map_err(|_| ExprError::NonFinite)
    }

    /// Symbolic partial derivative with respect to variable `var`, lightly
    /// simplified (zero and unit factors, constant folding).
    pub fn derivative(&self, var: usize) -> Expr {
        Expr {
            vars: self.vars.clone(),
            root: diff_node(&self.root, var),
        }
    }

    /// Same expression re-indexed against a larger variable list.
    pub fn with_variables(&self, vars: &[String]) -> Option<Expr> {
        let map: Option<Vec<usize>> = self.vars.iter().map(|v| vars.iter().position(|w| w == v)).collect();
        let map = map?;
        Some(Expr {
            vars: vars.to_vec(),
            root: reindex(&self.root, &map),
        })
    }
}

fn reindex(node: &Node, map: &[usize]) -> Node {
    let r = |n: &Node| Box::new(reindex(n, map));
    match node {
        Node::Const(c) => Node::Const(*c),
        Node::Var(i) => Node::Var(map[*i]),
        Node::Neg(a) => Node::Neg(r(a)),
        Node::Add(a, b) => Node::Add(r(a), r(b)),
        Node::Sub(a, b) => Node::Sub(r(a), r(b)),
        Node::Mul(a, b) => Node::Mul(r(a), r(b)),
        Node::Div(a, b) => Node::Div(r(a), r(b)),
        Node::Pow(a, n) => Node::Pow(r(a), *n),
        Node::Call(f, a) => Node::Call(*f, r(a)),
    }
}

fn finite(x: f64) -> Result<f64, ExprError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ExprError::NonFinite)
    }
}

fn eval_node(node: &Node, point: &[f64]) -> Result<f64, ExprError> {
    let v = match node {
        Node::Const(c) => *c,
        Node::Var(i) => point[*i],
        Node::Neg(a) => -eval_node(a, point)?,
        Node::Add(a, b) => eval_node(a, point)? + eval_node(b, point)?,
        Node::Sub(a, b) => eval_node(a, point)? - eval_node(b, point)?,
        Node::Mul(a, b) => eval_node(a, point)? * eval_node(b, point)?,
        Node::Div(a, b) => {
            let den = eval_node(b, point)?;
            if den == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            eval_node(a, point)? / den
        }
        Node::Pow(a, n) => eval_node(a, point)?.powi(*n as i32),
        Node::Call(f, a) => {
            let x = eval_node(a, point)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
            }
        }
    };
    finite(v)
}

fn series_node(node: &Node, args: &[Series], dim: usize, order: usize) -> Result<Series, ExprError> {
    let rec = |n: &Node| series_node(n, args, dim, order);
    Ok(match node {
        Node::Const(c) => Series::constant(dim, order, *c),
        Node::Var(i) => args[*i].clone(),
        Node::Neg(a) => -&rec(a)?,
        Node::Add(a, b) => &rec(a)? + &rec(b)?,
        Node::Sub(a, b) => &rec(a)? - &rec(b)?,
        Node::Mul(a, b) => &rec(a)? * &rec(b)?,
        Node::Div(a, b) => {
            let den = rec(b)?;
            if den.constant_term() == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            rec(a)?.div_series(&den)?
        }
        Node::Pow(a, n) => rec(a)?.powi(*n),
        Node::Call(f, a) => {
            let x = rec(a)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
            }
        }
    })
}

impl Node {
    /// `a + b` with trivial constant folding.
    pub fn sum(a: Node, b: Node) -> Node {
        s_add(a, b)
    }

    /// `a * b` with trivial constant folding.
    pub fn product(a: Node, b: Node) -> Node {
        s_mul(a, b)
    }
}

fn is_const(node: &Node, value: f64) -> bool {
    matches!(node, Node::Const(c) if *c == value)
}

fn s_neg(a: Node) -> Node {
    match a {
        Node::Const(c) => Node::Const(-c),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn s_add(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
        (a, b) if is_const(&a, 0.0) => b,
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn s_sub(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => s_neg(b),
        (a, b) => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn s_mul(a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
        (a, _) if is_const(&a, 0.0) => Node::Const(0.0),
        (_, b) if is_const(&b, 0.0) => Node::Const(0.0),
        (a, b) if is_const(&a, 1.0) => b,
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn s_div(a: Node, b: Node) -> Node {
    match (a, b) {
        (a, _) if is_const(&a, 0.0) => Node::Const(0.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Node::Div(Box::new(a), Box::new(b)),
    }
}

fn s_pow(a: Node, n: u32) -> Node {
    match n {
        0 => Node::Const(1.0),
        1 => a,
        _ => Node::Pow(Box::new(a), n),
    }
}

fn diff_node(node: &Node, var: usize) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => s_neg(diff_node(a, var)),
        Node::Add(a, b) => s_add(diff_node(a, var), diff_node(b, var)),
        Node::Sub(a, b) => s_sub(diff_node(a, var), diff_node(b, var)),
        Node::Mul(a, b) => s_add(s_mul(diff_node(a, var), (**b).clone()), s_mul((**a).clone(), diff_node(b, var))),
        Node::Div(a, b) => {
            let num = s_sub(s_mul(diff_node(a, var), (**b).clone()), s_mul((**a).clone(), diff_node(b, var)));
            s_div(num, s_pow((**b).clone(), 2))
        }
        Node::Pow(a, n) => {
            if *n == 0 {
                return Node::Const(0.0);
            }
            s_mul(s_mul(Node::Const(f64::from(*n)), s_pow((**a).clone(), n - 1)), diff_node(a, var))
        }
        Node::Call(f, a) => {
            let inner = diff_node(a, var);
            let outer = match f {
                Func::Sin => Node::Call(Func::Cos, a.clone()),
                Func::Cos => s_neg(Node::Call(Func::Sin, a.clone())),
                Func::Exp => Node::Call(Func::Exp, a.clone()),
            };
            s_mul(outer, inner)
        }
    }
}

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => PREC_SUM,
        Node::Mul(..) | Node::Div(..) => PREC_PRODUCT,
        Node::Neg(..) => PREC_NEG,
        Node::Const(c) if c.is_sign_negative() => PREC_NEG,
        Node::Pow(..) => PREC_POW,
        Node::Const(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
    }
}

struct Printer<'a> {
    node: &'a Node,
    vars: &'a [String],
}

impl Printer<'_> {
    fn child<'b>(&'b self, node: &'b Node) -> Printer<'b> {
        Printer { node, vars: self.vars }
    }

    fn wrapped(&self, f: &mut fmt::Formatter<'_>, node: &Node, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({})", self.child(node))
        } else {
            write!(f, "{}", self.child(node))
        }
    }

    fn binary(&self, f: &mut fmt::Formatter<'_>, a: &Node, op: &str, b: &Node, prec: u8) -> fmt::Result {
        self.wrapped(f, a, precedence(a) < prec)?;
        write!(f, "{op}")?;
        self.wrapped(f, b, precedence(b) <= prec)
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "{}", self.vars[*i]),
            Node::Neg(a) => {
                write!(f, "-")?;
                self.wrapped(f, a, precedence(a) < PREC_NEG)
            }
            Node::Add(a, b) => self.binary(f, a, " + ", b, PREC_SUM),
            Node::Sub(a, b) => self.binary(f, a, " - ", b, PREC_SUM),
            Node::Mul(a, b) => self.binary(f, a, "*", b, PREC_PRODUCT),
            Node::Div(a, b) => self.binary(f, a, "/", b, PREC_PRODUCT),
            Node::Pow(a, n) => {
                self.wrapped(f, a, precedence(a) < PREC_ATOM)?;
                write!(f, "^{n}")
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), self.child(a)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            node: &self.root,
            vars: &self.vars,
        }
        .fmt(f)
    }
}
