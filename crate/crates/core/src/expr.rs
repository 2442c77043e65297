//! A small predicate language over node attributes.
//!
//! Used for dyad indicators (`i.role == "child" && j.age >= 18`), node
//! predicates (`x >= 13 && x <= 18`, where `x` is the term's attribute) and
//! network conditions (`!any(i.role == "child")`).
//!
//! Grammar, loosest binding first: `||`, `&&`, `!`, comparisons
//! (`== != < <= > >=`), `+ -`, `* /`, unary `-`, atoms. Atoms are numbers,
//! quoted strings, `true`/`false`, `n` (node count), `x`, `i.<attr>`,
//! `j.<attr>`, parenthesised expressions and the functions `abs(e)`,
//! `any(e)`, `all(e)`, `count(e)`. The quantifiers bind `i` to each node in
//! turn.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::graph::{AttrValue, Network};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttr(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("`{0}` is not bound in this context")]
    Unbound(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    I,
    J,
}

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    Str(String),
    Bool(bool),
    Attr(Node, String),
    X,
    N,
    Not(Box<Ast>),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Abs(Box<Ast>),
    Quant(Quant, Box<Ast>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quant {
    Any,
    All,
    Count,
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    src: String,
    ast: Ast,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Str(&'a str),
    Bool(bool),
}

impl Value<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "bool",
        }
    }
}

/// Bindings for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub net: &'a Network,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub x: Option<AttrValue<'a>>,
}

impl<'a> Env<'a> {
    pub fn network(net: &'a Network) -> Self {
        Env { net, i: None, j: None, x: None }
    }

    pub fn dyad(net: &'a Network, i: usize, j: usize) -> Self {
        Env { net, i: Some(i), j: Some(j), x: None }
    }

    pub fn node(net: &'a Network, i: usize, x: Option<AttrValue<'a>>) -> Self {
        Env { net, i: Some(i), j: None, x }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let ast = p.or()?;
        if p.pos != p.tokens.len() {
            return Err(ExprError::Parse {
                pos: p.tokens[p.pos].1,
                msg: "trailing input".into(),
            });
        }
        Ok(Expr { src: src.to_string(), ast })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    /// Attribute names the expression reads.
    pub fn attributes(&self) -> BTreeSet<String> {
        fn walk(a: &Ast, out: &mut BTreeSet<String>) {
            match a {
                Ast::Attr(_, name) => {
                    out.insert(name.clone());
                }
                Ast::Not(e) | Ast::Neg(e) | Ast::Abs(e) | Ast::Quant(_, e) => walk(e, out),
                Ast::Bin(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                _ => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.ast, &mut out);
        out
    }

    pub fn eval<'a>(&'a self, env: &Env<'a>) -> Result<Value<'a>, ExprError> {
        eval(&self.ast, env)
    }

    pub fn eval_bool(&self, env: &Env<'_>) -> Result<bool, ExprError> {
        match self.eval(env)? {
            Value::Bool(b) => Ok(b),
            v => Err(ExprError::Type(format!("`{}` evaluates to a {}, expected bool", self.src, v.kind()))),
        }
    }
}

fn eval<'a>(a: &'a Ast, env: &Env<'a>) -> Result<Value<'a>, ExprError> {
    Ok(match a {
        Ast::Num(v) => Value::Num(*v),
        Ast::Str(s) => Value::Str(s),
        Ast::Bool(b) => Value::Bool(*b),
        Ast::N => Value::Num(env.net.n() as f64),
        Ast::X => attr_value(env.x.ok_or(ExprError::Unbound("x"))?),
        Ast::Attr(which, name) => {
            let node = match which {
                Node::I => env.i.ok_or(ExprError::Unbound("i"))?,
                Node::J => env.j.ok_or(ExprError::Unbound("j"))?,
            };
            let col = env.net.attr(name).ok_or_else(|| ExprError::UnknownAttr(name.clone()))?;
            attr_value(col.value(node))
        }
        Ast::Not(e) => Value::Bool(!as_bool(eval(e, env)?)?),
        Ast::Neg(e) => Value::Num(-as_num(eval(e, env)?)?),
        Ast::Abs(e) => Value::Num(as_num(eval(e, env)?)?.abs()),
        Ast::Quant(q, body) => {
            let mut hits = 0usize;
            for i in 0..env.net.n() {
                let inner = Env { i: Some(i), ..*env };
                if as_bool(eval(body, &inner)?)? {
                    hits += 1;
                }
            }
            match q {
                Quant::Any => Value::Bool(hits > 0),
                Quant::All => Value::Bool(hits == env.net.n()),
                Quant::Count => Value::Num(hits as f64),
            }
        }
        Ast::Bin(op, l, r) => match op {
            BinOp::Or => Value::Bool(as_bool(eval(l, env)?)? || as_bool(eval(r, env)?)?),
            BinOp::And => Value::Bool(as_bool(eval(l, env)?)? && as_bool(eval(r, env)?)?),
            BinOp::Eq | BinOp::Ne => {
                let (lv, rv) = (eval(l, env)?, eval(r, env)?);
                let eq = match (&lv, &rv) {
                    (Value::Num(a), Value::Num(b)) => a == b,
                    (Value::Str(a), Value::Str(b)) => a == b,
                    (Value::Bool(a), Value::Bool(b)) => a == b,
                    _ => {
                        return Err(ExprError::Type(format!(
                            "cannot compare {} with {}",
                            lv.kind(),
                            rv.kind()
                        )))
                    }
                };
                Value::Bool(if *op == BinOp::Eq { eq } else { !eq })
            }
            _ => {
                let (x, y) = (as_num(eval(l, env)?)?, as_num(eval(r, env)?)?);
                match op {
                    BinOp::Lt => Value::Bool(x < y),
                    BinOp::Le => Value::Bool(x <= y),
                    BinOp::Gt => Value::Bool(x > y),
                    BinOp::Ge => Value::Bool(x >= y),
                    BinOp::Add => Value::Num(x + y),
                    BinOp::Sub => Value::Num(x - y),
                    BinOp::Mul => Value::Num(x * y),
                    BinOp::Div => Value::Num(x / y),
                    _ => unreachable!(),
                }
            }
        },
    })
}

fn attr_value(v: AttrValue<'_>) -> Value<'_> {
    match v {
        AttrValue::Category(s) => Value::Str(s),
        AttrValue::Real(x) => Value::Num(x),
    }
}

fn as_bool(v: Value<'_>) -> Result<bool, ExprError> {
    match v {
        Value::Bool(b) => Ok(b),
        v => Err(ExprError::Type(format!("expected bool, found {}", v.kind()))),
    }
}

fn as_num(v: Value<'_>) -> Result<f64, ExprError> {
    match v {
        Value::Num(x) => Ok(x),
        v => Err(ExprError::Type(format!("expected number, found {}", v.kind()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    const SYMS: [&str; 18] = [
        "||", "&&", "==", "!=", "<=", ">=", "<", ">", "!", "+", "-", "*", "/", "(", ")", ".", ",",
        "=",
    ];
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos] as char;
        if c.is_whitespace() {
            pos += 1;
        } else if c.is_ascii_digit() {
            let start = pos;
            while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
                pos += 1;
            }
            let text = &src[start..pos];
            let v = text.parse().map_err(|_| ExprError::Parse {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c == '"' || c == '\'' {
            let start = pos;
            pos += 1;
            let body = pos;
            while pos < bytes.len() && bytes[pos] as char != c {
                pos += 1;
            }
            if pos == bytes.len() {
                return Err(ExprError::Parse { pos: start, msg: "unterminated string".into() });
            }
            out.push((Tok::Str(src[body..pos].to_string()), start));
            pos += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = pos;
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            out.push((Tok::Ident(src[start..pos].to_string()), start));
        } else {
            let sym = SYMS.iter().find(|s| src[pos..].starts_with(**s)).ok_or_else(|| {
                ExprError::Parse { pos, msg: format!("unexpected character `{c}`") }
            })?;
            if *sym == "=" {
                return Err(ExprError::Parse { pos, msg: "use `==` for equality".into() });
            }
            out.push((Tok::Sym(sym), pos));
            pos += sym.len();
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self, s: &str) -> bool {
        matches!(self.tokens.get(self.pos), Some((Tok::Sym(t), _)) if *t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.peek_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(usize::MAX, |t| t.1)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ExprError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(ExprError::Parse { pos: self.offset(), msg: format!("expected `{s}`") })
        }
    }

    fn or(&mut self) -> Result<Ast, ExprError> {
        let mut l = self.and()?;
        while self.eat_sym("||") {
            l = Ast::Bin(BinOp::Or, Box::new(l), Box::new(self.and()?));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Ast, ExprError> {
        let mut l = self.not()?;
        while self.eat_sym("&&") {
            l = Ast::Bin(BinOp::And, Box::new(l), Box::new(self.not()?));
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<Ast, ExprError> {
        if self.eat_sym("!") {
            return Ok(Ast::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Ast, ExprError> {
        let l = self.add()?;
        for (s, op) in [
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
        ] {
            if self.eat_sym(s) {
                return Ok(Ast::Bin(op, Box::new(l), Box::new(self.add()?)));
            }
        }
        Ok(l)
    }

    fn add(&mut self) -> Result<Ast, ExprError> {
        let mut l = self.mul()?;
        loop {
            if self.eat_sym("+") {
                l = Ast::Bin(BinOp::Add, Box::new(l), Box::new(self.mul()?));
            } else if self.eat_sym("-") {
                l = Ast::Bin(BinOp::Sub, Box::new(l), Box::new(self.mul()?));
            } else {
                return Ok(l);
            }
        }
    }

    fn mul(&mut self) -> Result<Ast, ExprError> {
        let mut l = self.unary()?;
        loop {
            if self.eat_sym("*") {
                l = Ast::Bin(BinOp::Mul, Box::new(l), Box::new(self.unary()?));
            } else if self.eat_sym("/") {
                l = Ast::Bin(BinOp::Div, Box::new(l), Box::new(self.unary()?));
            } else {
                return Ok(l);
            }
        }
    }

    fn unary(&mut self) -> Result<Ast, ExprError> {
        if self.eat_sym("-") {
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        let pos = self.offset();
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ExprError::Parse { pos, msg: "unexpected end of input".into() })?;
        self.pos += 1;
        match tok.0 {
            Tok::Num(v) => Ok(Ast::Num(v)),
            Tok::Str(s) => Ok(Ast::Str(s)),
            Tok::Sym("(") => {
                let e = self.or()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(id) => match id.as_str() {
                "true" => Ok(Ast::Bool(true)),
                "false" => Ok(Ast::Bool(false)),
                "n" => Ok(Ast::N),
                "x" => Ok(Ast::X),
                "i" | "j" => {
                    self.expect_sym(".")?;
                    let name = match self.tokens.get(self.pos) {
                        Some((Tok::Ident(name), _)) => name.clone(),
                        _ => {
                            return Err(ExprError::Parse {
                                pos: self.offset(),
                                msg: "expected attribute name".into(),
                            })
                        }
                    };
                    self.pos += 1;
                    Ok(Ast::Attr(if id == "i" { Node::I } else { Node::J }, name))
                }
                "abs" | "any" | "all" | "count" => {
                    self.expect_sym("(")?;
                    let e = Box::new(self.or()?);
                    self.expect_sym(")")?;
                    Ok(match id.as_str() {
                        "abs" => Ast::Abs(e),
                        "any" => Ast::Quant(Quant::Any, e),
                        "all" => Ast::Quant(Quant::All, e),
                        _ => Ast::Quant(Quant::Count, e),
                    })
                }
                other => Err(ExprError::Parse { pos, msg: format!("unknown identifier `{other}`") }),
            },
            Tok::Sym(s) => Err(ExprError::Parse { pos, msg: format!("unexpected `{s}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AttrColumn;

    fn household() -> Network {
        let mut net = Network::new("h", 4).unwrap();
        net.set_attr("role", AttrColumn::categorical(&["mother", "father", "child", "child"]))
            .unwrap();
        net.set_attr("age", AttrColumn::Real(vec![40.0, 42.0, 5.0, 9.0])).unwrap();
        net
    }

    #[test]
    fn dyad_predicates() {
        let net = household();
        let e = Expr::parse(r#"i.role == "child" && j.age >= 18"#).unwrap();
        assert!(e.eval_bool(&Env::dyad(&net, 2, 0)).unwrap());
        assert!(!e.eval_bool(&Env::dyad(&net, 0, 2)).unwrap());
        let gap = Expr::parse("abs(i.age - j.age) <= 4").unwrap();
        assert!(gap.eval_bool(&Env::dyad(&net, 2, 3)).unwrap());
        assert!(!gap.eval_bool(&Env::dyad(&net, 0, 3)).unwrap());
    }

    #[test]
    fn quantifiers() {
        let net = household();
        let e = Expr::parse("!any(i.role == 'child')").unwrap();
        assert!(!e.eval_bool(&Env::network(&net)).unwrap());
        let c = Expr::parse("count(i.age < 18) == 2 && all(i.age > 0) && n == 4").unwrap();
        assert!(c.eval_bool(&Env::network(&net)).unwrap());
    }

    #[test]
    fn value_predicate() {
        let net = household();
        let e = Expr::parse("x >= 5 && x <= 9").unwrap();
        let col = net.attr("age").unwrap();
        let hits: Vec<bool> =
            (0..4).map(|i| e.eval_bool(&Env::node(&net, i, Some(col.value(i)))).unwrap()).collect();
        assert_eq!(hits, vec![false, false, true, true]);
    }

    #[test]
    fn errors() {
        let net = household();
        assert!(matches!(Expr::parse("i.age = 3"), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("(i.age"), Err(ExprError::Parse { .. })));
        assert!(matches!(Expr::parse("foo"), Err(ExprError::Parse { .. })));
        let e = Expr::parse("i.height > 1").unwrap();
        assert_eq!(
            e.eval_bool(&Env::dyad(&net, 0, 1)),
            Err(ExprError::UnknownAttr("height".into()))
        );
        let t = Expr::parse("i.role > 1").unwrap();
        assert!(matches!(t.eval_bool(&Env::dyad(&net, 0, 1)), Err(ExprError::Type(_))));
        let u = Expr::parse("j.age > 1").unwrap();
        assert_eq!(u.eval_bool(&Env::network(&net)), Err(ExprError::Unbound("j")));
    }

    #[test]
    fn attribute_listing() {
        let e = Expr::parse("i.a == j.b || any(i.c > 0)").unwrap();
        let attrs: Vec<_> = e.attributes().into_iter().collect();
        assert_eq!(attrs, vec!["a", "b", "c"]);
    }
}
