//! Small arithmetic expression language used for user-defined maps, vector
//! fields, conjugacies and symbolic sequence rules.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | constant | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp log sin cos abs sqrt cbrt` (one argument) and `pow(a, b)`.
//! Constants: `pi`, `phi` (golden ratio). Variables are resolved against a
//! caller-supplied name list when parsing, so evaluation is a slice lookup.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
    Sqrt,
    Cbrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "cbrt" => Func::Cbrt,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Abs => v.abs(),
            Func::Sqrt => v.sqrt(),
            Func::Cbrt => v.cbrt(),
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src`, resolving identifiers against `vars` (index = slot).
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
        let mut p = Parser {
            src,
            chars: src.char_indices().collect(),
            pos: 0,
            vars,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(vars)),
        }
    }

    /// Largest variable slot referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

// Integer exponents go through powi so negative bases stay real.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Expr {
            source_text: self.src.to_string(),
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character `{c}`"))),
        }
    }

    fn slice(&self, start: usize) -> &str {
        let begin = self.chars[start].0;
        let end = self
            .chars
            .get(self.pos)
            .map(|&(i, _)| i)
            .unwrap_or(self.src.len());
        &self.src[begin..end]
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = self.slice(start);
        text.parse::<f64>().map(Expr::Const).map_err(|_| {
            let mut e = self.err(&format!("malformed number `{text}`"));
            if let Error::Expr { column, .. } = &mut e {
                *column = start + 1;
            }
            e
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let name = self.slice(start).to_string();
        if let Some(slot) = self.vars.iter().position(|v| *v == name) {
            return Ok(Expr::Var(slot));
        }
        match name.as_str() {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "phi" => return Ok(Expr::Const((1.0 + 5f64.sqrt()) / 2.0)),
            _ => {}
        }
        if !self.eat('(') {
            self.pos = start;
            return Err(self.err(&format!("unknown identifier `{name}`")));
        }
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        if !self.eat(')') {
            return Err(self.err("expected `)` after function arguments"));
        }
        if name == "pow" {
            if args.len() != 2 {
                return Err(self.err("pow takes two arguments"));
            }
            let b = args.pop().unwrap();
            let a = args.pop().unwrap();
            return Ok(Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)));
        }
        let Some(func) = Func::from_name(&name) else {
            self.pos = start;
            return Err(self.err(&format!("unknown function `{name}`")));
        };
        if args.len() != 1 {
            return Err(self.err(&format!("{name} takes one argument")));
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }
}

/// Variable names for a point of ℝ^dim: `x0..x{dim-1}`, plus `x`, `y`, `z`
/// aliases for the first three coordinates.
pub fn coordinate_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).collect()
}

fn resolve_aliases(src: &str, dim: usize) -> Result<Expr> {
    let mut names: Vec<String> = coordinate_names(dim);
    for (alias, slot) in [("x", 0), ("y", 1), ("z", 2)] {
        if slot < dim {
            names.push(alias.to_string());
        }
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let e = Expr::parse(src, &refs)?;
    Ok(remap_aliases(e, dim))
}

// Alias slots sit after the canonical names; fold them back onto 0..dim.
fn remap_aliases(e: Expr, dim: usize) -> Expr {
    match e {
        Expr::Var(i) if i >= dim => Expr::Var(i - dim),
        Expr::Neg(a) => Expr::Neg(Box::new(remap_aliases(*a, dim))),
        Expr::Call(f, a) => Expr::Call(f, Box::new(remap_aliases(*a, dim))),
        Expr::Bin(op, a, b) => Expr::Bin(
            op,
            Box::new(remap_aliases(*a, dim)),
            Box::new(remap_aliases(*b, dim)),
        ),
        other => other,
    }
}

/// A self-map (or vector field) of ℝ^dim given component-wise by expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MapExpr {
    name: String,
    dim: usize,
    sources: Vec<String>,
    components: Vec<Expr>,
}

impl MapExpr {
    pub fn parse(name: &str, dim: usize, components: &[impl AsRef<str>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if components.len() != dim {
            return Err(Error::param(
                "map",
                format!("{name}: expected {dim} components, got {}", components.len()),
            ));
        }
        let sources: Vec<String> = components.iter().map(|s| s.as_ref().to_string()).collect();
        let components = sources
            .iter()
            .map(|s| resolve_aliases(s, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(MapExpr {
            name: name.to_string(),
            dim,
            sources,
            components,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Evaluates into `out`; returns false if any component is non-finite.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let mut ok = true;
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
            ok &= o.is_finite();
        }
        ok
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::VariantMismatch(format!(
                "{} expects dimension {}, got {}",
                self.name,
                self.dim,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.dim];
        if self.apply_into(x, &mut out) {
            Ok(out)
        } else {
            Err(Error::Domain {
                name: self.name.clone(),
                at: format!("{x:?}"),
            })
        }
    }
}

impl fmt::Display for MapExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ({})", self.name, self.sources.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expr::parse(src, vars).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[], &[]), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[], &[]), 512.0);
        assert_eq!(eval("-2 ^ 2", &[], &[]), -4.0);
        assert_eq!(eval("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(eval("1e-3 * 2E2", &[], &[]), 0.2);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval("cos(pi)", &[], &[]) + 1.0).abs() < 1e-15);
        assert_eq!(eval("pow(-2, 3)", &[], &[]), -8.0);
        assert_eq!(eval("cbrt(-27)", &[], &[]), -3.0);
        assert_eq!(eval("abs(x - 5)", &["x"], &[2.0]), 3.0);
        assert!((eval("phi - 1 - 1/phi", &[], &[])).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_column() {
        match Expr::parse("x + * 2", &["x"]) {
            Err(Error::Expr { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("w + 1", &["x"]).is_err());
        assert!(Expr::parse("tan(x)", &["x"]).is_err());
        assert!(Expr::parse("(x", &["x"]).is_err());
        assert!(Expr::parse("x 2", &["x"]).is_err());
    }

    #[test]
    fn map_aliases_and_domain() {
        let m = MapExpr::parse("rot", 2, &["-y", "x0"]).unwrap();
        assert_eq!(m.apply(&[1.0, 2.0]).unwrap(), vec![-2.0, 1.0]);
        let bad = MapExpr::parse("inv", 1, &["1/x"]).unwrap();
        assert!(matches!(bad.apply(&[0.0]), Err(Error::Domain { .. })));
        assert!(MapExpr::parse("z3", 2, &["z", "x"]).is_err());
        assert!(MapExpr::parse("short", 2, &["x"]).is_err());
    }
}
