//! Integer index expressions: affine forms for memlet subsets and the
//! slightly richer bounds (`min`, `ceildiv`) that tiled map ranges need.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// `constant + Σ coeff·var`, with zero coefficients never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Affine {
    pub constant: i64,
    pub terms: BTreeMap<String, i64>,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine { constant: c, terms: BTreeMap::new() }
    }

    pub fn var(name: &str) -> Self {
        Affine::term(name, 1)
    }

    pub fn term(name: &str, coeff: i64) -> Self {
        let mut terms = BTreeMap::new();
        if coeff != 0 {
            terms.insert(name.to_string(), coeff);
        }
        Affine { constant: 0, terms }
    }

    pub fn add(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        out.constant += other.constant;
        for (v, c) in &other.terms {
            let e = out.terms.entry(v.clone()).or_insert(0);
            *e += c;
            if *e == 0 {
                out.terms.remove(v);
            }
        }
        out
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        self.add(&other.scale(-1))
    }

    pub fn scale(&self, k: i64) -> Affine {
        if k == 0 {
            return Affine::constant(0);
        }
        Affine {
            constant: self.constant * k,
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
        }
    }

    pub fn plus(&self, c: i64) -> Affine {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.terms.is_empty().then_some(self.constant)
    }

    /// The variable name when the expression is exactly `var`.
    pub fn as_single_var(&self) -> Option<&str> {
        if self.constant != 0 || self.terms.len() != 1 {
            return None;
        }
        let (v, c) = self.terms.iter().next()?;
        (*c == 1).then_some(v.as_str())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn uses(&self, name: &str) -> bool {
        self.terms.contains_key(name)
    }

    pub fn substitute(&self, name: &str, value: &Affine) -> Affine {
        match self.terms.get(name) {
            None => self.clone(),
            Some(&c) => {
                let mut rest = self.clone();
                rest.terms.remove(name);
                rest.add(&value.scale(c))
            }
        }
    }

    pub fn rename(&self, from: &str, to: &str) -> Affine {
        self.substitute(from, &Affine::var(to))
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Result<i64> {
        let mut acc = self.constant;
        for (v, c) in &self.terms {
            let x = lookup(v).ok_or_else(|| Error::Binding(format!("unbound variable '{v}'")))?;
            acc += c * x;
        }
        Ok(acc)
    }

    pub fn parse(text: &str) -> Result<Affine> {
        match Bound::parse(text)? {
            Bound::Affine(a) => Ok(a),
            other => Err(Error::Parse { offset: 0, message: format!("'{other}' is not affine") }),
        }
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, &c) in &self.terms {
            let (neg, mag) = (c < 0, c.unsigned_abs());
            match (first, neg) {
                (true, true) => write!(f, "-")?,
                (true, false) => {}
                (false, true) => write!(f, " - ")?,
                (false, false) => write!(f, " + ")?,
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", self.constant.unsigned_abs())
        } else {
            Ok(())
        }
    }
}

/// A map or loop bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Bound {
    Affine(Affine),
    Min(Affine, Affine),
    /// `ceil(a / d)` for non-negative `a`, `d > 0`.
    CeilDiv(Affine, i64),
}

impl Bound {
    pub fn constant(c: i64) -> Self {
        Bound::Affine(Affine::constant(c))
    }

    pub fn var(name: &str) -> Self {
        Bound::Affine(Affine::var(name))
    }

    pub fn as_affine(&self) -> Option<&Affine> {
        match self {
            Bound::Affine(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.as_affine().and_then(Affine::as_constant)
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        match self {
            Bound::Affine(a) | Bound::CeilDiv(a, _) => a.vars().collect(),
            Bound::Min(a, b) => a.vars().chain(b.vars()).collect(),
        }
    }

    pub fn uses(&self, name: &str) -> bool {
        self.vars().contains(name)
    }

    pub fn map_affine(&self, f: impl Fn(&Affine) -> Affine) -> Bound {
        match self {
            Bound::Affine(a) => Bound::Affine(f(a)),
            Bound::Min(a, b) => Bound::Min(f(a), f(b)),
            Bound::CeilDiv(a, d) => Bound::CeilDiv(f(a), *d),
        }
        .folded()
    }

    pub fn substitute(&self, name: &str, value: &Affine) -> Bound {
        self.map_affine(|a| a.substitute(name, value))
    }

    pub fn rename(&self, from: &str, to: &str) -> Bound {
        self.map_affine(|a| a.rename(from, to))
    }

    /// Constant-fold `min` and `ceildiv` when their operands are constants.
    pub fn folded(self) -> Bound {
        match self {
            Bound::Min(a, b) => match (a.as_constant(), b.as_constant()) {
                (Some(x), Some(y)) => Bound::constant(x.min(y)),
                _ if a == b => Bound::Affine(a),
                _ => Bound::Min(a, b),
            },
            Bound::CeilDiv(a, 1) => Bound::Affine(a),
            Bound::CeilDiv(a, d) => match a.as_constant() {
                Some(x) => Bound::constant(ceil_div(x, d)),
                None => Bound::CeilDiv(a, d),
            },
            b => b,
        }
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Result<i64> {
        Ok(match self {
            Bound::Affine(a) => a.eval(lookup)?,
            Bound::Min(a, b) => a.eval(lookup)?.min(b.eval(lookup)?),
            Bound::CeilDiv(a, d) => ceil_div(a.eval(lookup)?, *d),
        })
    }

    pub fn parse(text: &str) -> Result<Bound> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let b = p.bound()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(b)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Affine(a) => write!(f, "{a}"),
            Bound::Min(a, b) => write!(f, "min({a}, {b})"),
            Bound::CeilDiv(a, d) => write!(f, "ceildiv({a}, {d})"),
        }
    }
}

pub fn ceil_div(x: i64, d: i64) -> i64 {
    x.div_euclid(d) + i64::from(x.rem_euclid(d) != 0)
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: format!("{msg} in index expression '{}'", String::from_utf8_lossy(self.src)),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
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
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            if self.pos == start && self.src[self.pos].is_ascii_digit() {
                return None;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn integer(&mut self) -> Option<i64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn bound(&mut self) -> Result<Bound> {
        let save = self.pos;
        if let Some(name) = self.ident() {
            if name == "min" || name == "ceildiv" {
                self.expect(b'(')?;
                let a = self.affine()?;
                self.expect(b',')?;
                let out = if name == "min" {
                    Bound::Min(a, self.affine()?)
                } else {
                    let d = self.integer().ok_or_else(|| self.error("expected integer divisor"))?;
                    if d <= 0 {
                        return Err(self.error("divisor must be positive"));
                    }
                    Bound::CeilDiv(a, d)
                };
                self.expect(b')')?;
                return Ok(out);
            }
        }
        self.pos = save;
        Ok(Bound::Affine(self.affine()?))
    }

    fn affine(&mut self) -> Result<Affine> {
        let mut acc = if self.eat(b'-') { self.term()?.scale(-1) } else { self.term()? };
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.term()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Affine> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            let rhs = self.factor()?;
            acc = match (acc.as_constant(), rhs.as_constant()) {
                (Some(c), _) => rhs.scale(c),
                (_, Some(c)) => acc.scale(c),
                _ => return Err(self.error("product of two variables is not affine")),
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Affine> {
        if self.eat(b'(') {
            let a = self.affine()?;
            self.expect(b')')?;
            return Ok(a);
        }
        if self.eat(b'-') {
            return Ok(self.factor()?.scale(-1));
        }
        if let Some(c) = self.integer() {
            return Ok(Affine::constant(c));
        }
        if let Some(name) = self.ident() {
            return Ok(Affine::var(&name));
        }
        Err(self.error("expected integer, identifier or '('"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let a = Affine::var("e").scale(2).add(&Affine::var("k")).plus(-3);
        assert_eq!(a.to_string(), "2*e + k - 3");
        assert_eq!(Affine::parse("2*e + k - 3").unwrap(), a);
        assert_eq!(Affine::parse("k*2 - (e - 1)").unwrap().to_string(), "-e + 2*k + 1");
        assert_eq!(Affine::constant(0).to_string(), "0");
        assert_eq!(Bound::parse("min(2*tile_i + 2, 7)").unwrap().to_string(), "min(2*tile_i + 2, 7)");
        assert_eq!(Bound::parse("ceildiv(nel, 4)").unwrap(), Bound::CeilDiv(Affine::var("nel"), 4));
    }

    #[test]
    fn rejects_nonlinear_and_garbage() {
        assert!(Affine::parse("e*k").is_err());
        assert!(Affine::parse("e +").is_err());
        assert!(Bound::parse("ceildiv(e, 0)").is_err());
        assert!(Affine::parse("min(e, k)").is_err());
    }

    #[test]
    fn folding() {
        assert_eq!(Bound::Min(Affine::constant(3), Affine::constant(5)).folded(), Bound::constant(3));
        assert_eq!(Bound::CeilDiv(Affine::constant(7), 2).folded(), Bound::constant(4));
        let b = Bound::Min(Affine::var("t").scale(2).plus(2), Affine::var("lx"));
        assert_eq!(b.substitute("lx", &Affine::constant(7)).eval(&|_| Some(3)).unwrap(), 7);
    }

    #[test]
    fn substitution() {
        let a = Affine::parse("3*lx + e").unwrap();
        assert_eq!(a.substitute("lx", &Affine::constant(8)).to_string(), "e + 24");
        assert_eq!(a.rename("e", "e2").to_string(), "e2 + 3*lx");
    }
}
