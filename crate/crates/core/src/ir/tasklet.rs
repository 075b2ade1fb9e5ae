//! The scalar statement language of tasklets: `out = expr` statements over
//! connector names with `+`, `-`, `*`, unary minus and float constants.
//! Evaluation is left-to-right as written; nothing is re-associated.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Conn(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn conn(name: &str) -> Expr {
        Expr::Conn(name.to_string())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Add, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Mul, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Neg(Box::new(other)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            _ => 3,
        }
    }

    pub fn visit_conns<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Const(_) => {}
            Expr::Conn(c) => f(c),
            Expr::Neg(e) => e.visit_conns(f),
            Expr::Bin(_, a, b) => {
                a.visit_conns(f);
                b.visit_conns(f);
            }
        }
    }

    pub fn rename_conn(&mut self, from: &str, to: &str) {
        match self {
            Expr::Conn(c) if c == from => *c = to.to_string(),
            Expr::Neg(e) => e.rename_conn(from, to),
            Expr::Bin(_, a, b) => {
                a.rename_conn(from, to);
                b.rename_conn(from, to);
            }
            _ => {}
        }
    }

    pub fn count_ops(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Conn(_) => 0,
            Expr::Neg(e) => e.count_ops(),
            Expr::Bin(_, a, b) => 1 + a.count_ops() + b.count_ops(),
        }
    }

    /// Print with the fewest parentheses that still reparse to this exact tree.
    pub fn write_with(&self, f: &mut impl fmt::Write, conn: &dyn Fn(&str) -> String) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", format_const(*c)),
            Expr::Conn(c) => write!(f, "{}", conn(c)),
            Expr::Neg(e) => {
                write!(f, "-")?;
                if e.precedence() < 3 {
                    write!(f, "(")?;
                    e.write_with(f, conn)?;
                    write!(f, ")")
                } else {
                    e.write_with(f, conn)
                }
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let lparen = a.precedence() < p;
                let rparen = b.precedence() <= p;
                if lparen {
                    write!(f, "(")?;
                }
                a.write_with(f, conn)?;
                if lparen {
                    write!(f, ")")?;
                }
                write!(f, " {} ", op.symbol())?;
                if rparen {
                    write!(f, "(")?;
                }
                b.write_with(f, conn)?;
                if rparen {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_with(f, &|c| c.to_string())
    }
}

/// Shortest round-tripping literal, always recognisable as floating point.
pub fn format_const(c: f64) -> String {
    let s = format!("{c:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub target: String,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Body(pub Vec<Stmt>);

impl Body {
    pub fn parse(text: &str) -> Result<Body> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let mut stmts = Vec::new();
        loop {
            while p.eat(b';') {}
            if p.peek().is_none() {
                break;
            }
            let target = p.ident().ok_or_else(|| p.error("expected assignment target"))?;
            p.expect(b'=')?;
            let value = p.expr()?;
            stmts.push(Stmt { target, value });
            if p.peek().is_some() && !p.eat(b';') {
                return Err(p.error("expected ';'"));
            }
        }
        Ok(Body(stmts))
    }
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, s) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{} = {}", s.target, s.value)?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: format!("{msg} in tasklet body '{}'", String::from_utf8_lossy(self.src)),
        }
    }

    fn peek(&mut self) -> Option<u8> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {}
            _ => return None,
        }
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Option<f64> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {}
            _ => return None,
        }
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'-' || c == b'+') && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(acc);
            };
            acc = Expr::bin(op, acc, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        while self.eat(b'*') {
            acc = Expr::mul(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::neg(self.unary()?));
        }
        if self.eat(b'(') {
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if self.eat(b'/') {
            return Err(self.error("division is not supported"));
        }
        if let Some(v) = self.number() {
            return Ok(Expr::Const(v));
        }
        if let Some(name) = self.ident() {
            return Ok(Expr::Conn(name));
        }
        Err(self.error("expected constant, connector or '('"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_print_combine() {
        let src = "ur = H * (G00 * r + G01 * s + G02 * t)";
        let b = Body::parse(src).unwrap();
        assert_eq!(b.to_string(), src);
        let Expr::Bin(BinOp::Mul, _, rhs) = &b.0[0].value else { panic!() };
        // left-to-right: (G00*r + G01*s) + G02*t
        let Expr::Bin(BinOp::Add, lhs, _) = rhs.as_ref() else { panic!() };
        assert!(matches!(lhs.as_ref(), Expr::Bin(BinOp::Add, ..)));
    }

    #[test]
    fn right_nested_sum_keeps_parens() {
        let e = Expr::add(Expr::conn("a"), Expr::add(Expr::conn("b"), Expr::conn("c")));
        assert_eq!(e.to_string(), "a + (b + c)");
        let back = Body::parse(&format!("x = {e}")).unwrap();
        assert_eq!(back.0[0].value, e);
    }

    #[test]
    fn constants_round_trip() {
        for c in [0.0, -0.0, 1.5, -0.5, 1e-300, 6.02e23, 0.1] {
            let e = Expr::mul(Expr::Const(c), Expr::conn("a"));
            let back = Body::parse(&format!("x = {e}")).unwrap();
            let Expr::Bin(_, k, _) = &back.0[0].value else { panic!() };
            let Expr::Const(v) = k.as_ref() else { panic!("{e}") };
            assert_eq!(v.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn multiple_statements() {
        let b = Body::parse("a = 0.0; b = x - -2.0 * y;").unwrap();
        assert_eq!(b.0.len(), 2);
        assert_eq!(b.to_string(), "a = 0.0; b = x - -2.0 * y");
    }

    #[test]
    fn rejects_division() {
        assert!(Body::parse("a = x / y").is_err());
        assert!(Body::parse("a = ").is_err());
    }
}
