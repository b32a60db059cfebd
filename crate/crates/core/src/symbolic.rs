//! Differential polynomials in `u`, `ξ` and their x-derivatives, with exact
//! coefficients in `ℚ[λ]`.
//!
//! A monomial is a product of even factors `u^(k)`, commutator factors
//! `[ξ^(a), ξ^(b)]` stored with `a > b`, and at most one bare `ξ^(c)`. Since
//! the even part is commutative and central, this product form is closed
//! under every operation used here, and the normal form (sorted factors,
//! merged terms, zero terms dropped) is unique.
//!
//! Equivalence modulo total derivatives is decided by Monte Carlo: both sides
//! are instantiated on random periodic fields over two different backends and
//! their integrals compared.
//!
//! Grammar (ASCII):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary ('*' unary)*
//! unary := '-' unary | power
//! power := atom ('^' INT)?
//! atom  := INT ('/' INT)? | 'L' | sym | '[' expr ',' expr ']' | 'D(' expr ')' | '(' expr ')'
//! sym   := ('u' | 'xi') "'"* ('^(' INT ')')?
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{Algebra, AlgebraDescriptor};
use crate::exec;
use crate::fields::{build_initial_condition, EvenField, FieldError, IcProfile, OddField, PeriodicGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("product of two odd factors outside a commutator")]
    OddProduct,
    #[error("commutator argument is not odd-graded")]
    NotOdd,
    #[error("expected an even-graded density")]
    NotEven,
    #[error("Gardner coefficients are available up to order {max}, got {0}", max = MAX_SYMBOLIC_ORDER)]
    Order(usize),
    #[error("conserved-density table needs an even order <= 8, got {0}")]
    TableOrder(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Highest order of [`gardner_coefficients`].
pub const MAX_SYMBOLIC_ORDER: usize = 10;

/// Polynomial in λ with rational coefficients; `coeffs[i]` multiplies `λ^i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LambdaPoly {
    coeffs: Vec<BigRational>,
}

impl LambdaPoly {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial(c, 0)
    }

    pub fn monomial(c: BigRational, power: usize) -> Self {
        let mut coeffs = vec![BigRational::zero(); power + 1];
        coeffs[power] = c;
        Self::trimmed(coeffs)
    }

    pub fn from_integer(n: i64) -> Self {
        Self::constant(BigRational::from_integer(n.into()))
    }

    fn trimmed(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = BigRational::zero();
        Self::trimmed(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&zero) + other.coeffs.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn neg(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::trimmed(out)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::trimmed(self.coeffs.iter().map(|x| x * c).collect())
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * lambda + c.to_f64().unwrap_or(f64::NAN))
    }
}

/// Canonical factor content of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonoKey {
    /// Derivative orders of the `u` factors, sorted.
    pub even: Vec<u32>,
    /// Commutators `[ξ^(a), ξ^(b)]` with `a > b`, sorted.
    pub comms: Vec<(u32, u32)>,
    /// Order of the bare `ξ` factor, if any.
    pub odd: Option<u32>,
}

impl MonoKey {
    fn one() -> Self {
        Self { even: Vec::new(), comms: Vec::new(), odd: None }
    }

    fn mul(&self, other: &Self) -> Result<Self, SymbolicError> {
        let odd = match (self.odd, other.odd) {
            (Some(_), Some(_)) => return Err(SymbolicError::OddProduct),
            (a, b) => a.or(b),
        };
        let mut even = [self.even.as_slice(), other.even.as_slice()].concat();
        even.sort_unstable();
        let mut comms = [self.comms.as_slice(), other.comms.as_slice()].concat();
        comms.sort_unstable();
        Ok(Self { even, comms, odd })
    }

    fn max_orders(&self) -> (Option<u32>, Option<u32>) {
        let u = self.even.iter().copied().max();
        let x = self.comms.iter().map(|&(a, _)| a).chain(self.odd).max();
        (u, x)
    }
}

/// `[ξ^(a), ξ^(b)]` as `(sign, (max, min))`, or `None` when `a = b`.
fn normalize_comm(a: u32, b: u32) -> Option<(i64, (u32, u32))> {
    match a.cmp(&b) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Greater => Some((1, (a, b))),
        std::cmp::Ordering::Less => Some((-1, (b, a))),
    }
}

/// Grading of a homogeneous polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Normal-form differential polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffPolynomial {
    terms: BTreeMap<MonoKey, LambdaPoly>,
}

impl DiffPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(LambdaPoly::from_integer(1))
    }

    pub fn constant(c: LambdaPoly) -> Self {
        Self::from_term(MonoKey::one(), c)
    }

    pub fn lambda() -> Self {
        Self::constant(LambdaPoly::monomial(BigRational::one(), 1))
    }

    /// `u^(k)`.
    pub fn u(k: u32) -> Self {
        Self::from_term(MonoKey { even: vec![k], comms: Vec::new(), odd: None }, LambdaPoly::from_integer(1))
    }

    /// `ξ^(k)`.
    pub fn xi(k: u32) -> Self {
        Self::from_term(MonoKey { even: Vec::new(), comms: Vec::new(), odd: Some(k) }, LambdaPoly::from_integer(1))
    }

    fn from_term(key: MonoKey, c: LambdaPoly) -> Self {
        let mut p = Self::zero();
        p.accumulate(key, c);
        p
    }

    fn accumulate(&mut self, key: MonoKey, c: LambdaPoly) {
        if c.is_zero() {
            return;
        }
        let sum = match self.terms.remove(&key) {
            Some(prev) => prev.add(&c),
            None => c,
        };
        if !sum.is_zero() {
            self.terms.insert(key, sum);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MonoKey, &LambdaPoly)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(parity)` when homogeneous; the zero polynomial counts as even.
    pub fn parity(&self) -> Option<Parity> {
        let odd = self.terms.keys().filter(|k| k.odd.is_some()).count();
        match odd {
            0 => Some(Parity::Even),
            n if n == self.terms.len() => Some(Parity::Odd),
            _ => None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.accumulate(k.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(k, c)| (k.clone(), c.neg())).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &LambdaPoly) -> Self {
        let mut out = Self::zero();
        for (k, v) in &self.terms {
            out.accumulate(k.clone(), v.mul(c));
        }
        out
    }

    pub fn scale_rational(&self, c: &BigRational) -> Self {
        self.scale(&LambdaPoly::constant(c.clone()))
    }

    /// Product; fails if two bare odd factors would meet.
    pub fn mul(&self, other: &Self) -> Result<Self, SymbolicError> {
        let mut out = Self::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                out.accumulate(ka.mul(kb)?, ca.mul(cb));
            }
        }
        Ok(out)
    }

    pub fn pow(&self, n: u32) -> Result<Self, SymbolicError> {
        let mut out = Self::one();
        for _ in 0..n {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// `[self, other]` for odd-graded arguments, by bilinearity with the even
    /// coefficients pulled out.
    pub fn bracket(&self, other: &Self) -> Result<Self, SymbolicError> {
        let mut out = Self::zero();
        for (ka, ca) in &self.terms {
            let a = ka.odd.ok_or(SymbolicError::NotOdd)?;
            for (kb, cb) in &other.terms {
                let b = kb.odd.ok_or(SymbolicError::NotOdd)?;
                let Some((sign, pair)) = normalize_comm(a, b) else { continue };
                let strip = |k: &MonoKey| MonoKey { odd: None, ..k.clone() };
                let mut key = strip(ka).mul(&strip(kb))?;
                key.comms.push(pair);
                key.comms.sort_unstable();
                out.accumulate(key, ca.mul(cb).scale(&BigRational::from_integer(sign.into())));
            }
        }
        Ok(out)
    }

    /// Total x-derivative by the Leibniz rule.
    pub fn differentiate_total(&self) -> Self {
        let mut out = Self::zero();
        for (key, c) in &self.terms {
            for i in 0..key.even.len() {
                let mut k = key.clone();
                k.even[i] += 1;
                k.even.sort_unstable();
                out.accumulate(k, c.clone());
            }
            for i in 0..key.comms.len() {
                let (a, b) = key.comms[i];
                for (na, nb) in [(a + 1, b), (a, b + 1)] {
                    let Some((sign, pair)) = normalize_comm(na, nb) else { continue };
                    let mut k = key.clone();
                    k.comms[i] = pair;
                    k.comms.sort_unstable();
                    out.accumulate(k, c.scale(&BigRational::from_integer(sign.into())));
                }
            }
            if let Some(o) = key.odd {
                let mut k = key.clone();
                k.odd = Some(o + 1);
                out.accumulate(k, c.clone());
            }
        }
        out
    }

    /// Highest derivative orders of `u` and `ξ` that occur.
    fn max_orders(&self) -> (u32, u32) {
        self.terms.keys().fold((0, 0), |(mu, mx), k| {
            let (u, x) = k.max_orders();
            (mu.max(u.unwrap_or(0)), mx.max(x.unwrap_or(0)))
        })
    }

    /// Evaluates an even-graded polynomial on fields.
    pub fn instantiate_even(&self, u: &EvenField, xi: &OddField, lambda: f64) -> Result<EvenField, SymbolicError> {
        if self.parity() != Some(Parity::Even) {
            return Err(SymbolicError::NotEven);
        }
        let cache = DerivativeCache::new(self, u, xi)?;
        let keys: Vec<_> = self.terms.iter().collect();
        let parts = exec::map_indexed(keys.len(), keys.len() * u.grid().points(), |i| {
            let (k, c) = keys[i];
            cache.even_monomial(k, c.eval(lambda))
        });
        Ok(parts.into_iter().fold(EvenField::zeros(u.grid(), u.algebra()), |acc, p| acc.add(&p)))
    }

    /// Evaluates an odd-graded polynomial on fields.
    pub fn instantiate_odd(&self, u: &EvenField, xi: &OddField, lambda: f64) -> Result<OddField, SymbolicError> {
        if self.parity() != Some(Parity::Odd) && !self.is_zero() {
            return Err(SymbolicError::NotOdd);
        }
        let cache = DerivativeCache::new(self, u, xi)?;
        let mut acc = OddField::zeros(u.grid(), u.algebra());
        for (k, c) in &self.terms {
            let even = MonoKey { odd: None, ..k.clone() };
            let coeff = cache.even_monomial(&even, c.eval(lambda));
            acc = acc.add(&coeff.mul_odd(&cache.xi[k.odd.unwrap() as usize]));
        }
        Ok(acc)
    }
}

struct DerivativeCache {
    u: Vec<EvenField>,
    xi: Vec<OddField>,
    comms: HashMap<(u32, u32), EvenField>,
}

impl DerivativeCache {
    fn new(p: &DiffPolynomial, u: &EvenField, xi: &OddField) -> Result<Self, SymbolicError> {
        u.compatible(xi)?;
        let (mu, mx) = p.max_orders();
        let orders_u: Vec<u32> = (1..=mu).collect();
        let orders_x: Vec<u32> = (1..=mx).collect();
        let mut ud = vec![u.clone()];
        ud.extend(u.derivatives(&orders_u));
        let mut xd = vec![xi.clone()];
        xd.extend(xi.derivatives(&orders_x));
        let mut comms = HashMap::new();
        for k in p.terms.keys() {
            for &(a, b) in &k.comms {
                comms.entry((a, b)).or_insert_with(|| xd[a as usize].commutator(&xd[b as usize]));
            }
        }
        Ok(Self { u: ud, xi: xd, comms })
    }

    fn even_monomial(&self, k: &MonoKey, coeff: f64) -> EvenField {
        let grid = self.u[0].grid();
        let alg = self.u[0].algebra();
        let mut acc: Option<EvenField> = None;
        let factors = k.even.iter().map(|&o| &self.u[o as usize]).chain(k.comms.iter().map(|p| &self.comms[p]));
        for f in factors {
            acc = Some(match acc {
                None => f.scale(coeff),
                Some(a) => a.mul(f),
            });
        }
        acc.unwrap_or_else(|| EvenField::constant(grid, &alg.scalar(coeff)))
    }
}

fn rational_string(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn symbol(name: &str, k: u32) -> String {
    if k <= 3 {
        format!("{name}{}", "'".repeat(k as usize))
    } else {
        format!("{name}^({k})")
    }
}

fn push_power(out: &mut Vec<String>, base: String, n: usize) {
    if n == 1 {
        out.push(base);
    } else if n > 1 {
        out.push(format!("{base}^{n}"));
    }
}

fn factor_strings(k: &MonoKey) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < k.even.len() {
        let j = i + k.even[i..].iter().take_while(|&&o| o == k.even[i]).count();
        push_power(&mut out, symbol("u", k.even[i]), j - i);
        i = j;
    }
    let mut i = 0;
    while i < k.comms.len() {
        let j = i + k.comms[i..].iter().take_while(|&&c| c == k.comms[i]).count();
        let (a, b) = k.comms[i];
        push_power(&mut out, format!("[{},{}]", symbol("xi", a), symbol("xi", b)), j - i);
        i = j;
    }
    if let Some(o) = k.odd {
        out.push(symbol("xi", o));
    }
    out
}

impl fmt::Display for DiffPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (n, (key, c)) in self.terms.iter().enumerate() {
            let factors = factor_strings(key);
            let nonzero: Vec<_> = c.coeffs.iter().enumerate().filter(|(_, x)| !x.is_zero()).collect();
            let (negative, mut parts) = if let [(p, x)] = nonzero.as_slice() {
                let mut parts = Vec::new();
                let mag = x.abs();
                if !mag.is_one() || (factors.is_empty() && *p == 0) {
                    parts.push(rational_string(&mag));
                }
                push_power(&mut parts, "L".to_string(), *p);
                (x.is_negative(), parts)
            } else {
                let inner: Vec<String> = nonzero
                    .iter()
                    .map(|(p, x)| {
                        let mut s = vec![rational_string(x)];
                        push_power(&mut s, "L".to_string(), *p);
                        s.join("*")
                    })
                    .collect();
                (false, vec![format!("({})", inner.join(" + "))])
            };
            parts.extend(factors);
            let body = parts.join("*");
            match (n, negative) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, " - {body}")?,
                (_, false) => write!(f, " + {body}")?,
            }
        }
        Ok(())
    }
}

impl FromStr for DiffPolynomial {
    type Err = SymbolicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    U,
    Xi,
    L,
    D,
    Prime,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, SymbolicError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        let single = match ch {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '\'' | '′' => Some(Tok::Prime),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' | '−' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(t) = single {
            out.push((pos, t));
            i += 1;
        } else if ch.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().map(|c| c.1).collect();
            out.push((pos, Tok::Int(digits.parse().unwrap())));
        } else if ch.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_alphabetic() {
                i += 1;
            }
            let word: String = chars[start..i].iter().map(|c| c.1).collect();
            let tok = match word.as_str() {
                "u" => Tok::U,
                "xi" => Tok::Xi,
                "L" => Tok::L,
                "D" => Tok::D,
                _ => return Err(SymbolicError::Syntax { pos, msg: format!("unknown symbol `{word}`") }),
            };
            out.push((pos, tok));
        } else {
            return Err(SymbolicError::Syntax { pos, msg: format!("unexpected character `{ch}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn error(&self, msg: impl Into<String>) -> SymbolicError {
        SymbolicError::Syntax { pos: self.pos(), msg: msg.into() }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SymbolicError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn int(&mut self) -> Result<BigInt, SymbolicError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = n.clone();
                self.at += 1;
                Ok(n)
            }
            _ => Err(self.error("expected an integer")),
        }
    }

    fn small_int(&mut self) -> Result<u32, SymbolicError> {
        let pos = self.pos();
        self.int()?.to_u32().ok_or(SymbolicError::Syntax { pos, msg: "integer too large".into() })
    }

    fn expr(&mut self) -> Result<DiffPolynomial, SymbolicError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc.add(&self.term()?);
            } else if self.eat(&Tok::Minus) {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<DiffPolynomial, SymbolicError> {
        let mut acc = self.unary()?;
        while self.eat(&Tok::Star) {
            let pos = self.pos();
            let rhs = self.unary()?;
            acc = acc.mul(&rhs).map_err(|e| locate(e, pos))?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<DiffPolynomial, SymbolicError> {
        if self.eat(&Tok::Minus) {
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<DiffPolynomial, SymbolicError> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let pos = self.pos();
            let n = self.small_int()?;
            return base.pow(n).map_err(|e| locate(e, pos));
        }
        Ok(base)
    }

    fn derivative_order(&mut self) -> Result<u32, SymbolicError> {
        let mut k = 0;
        while self.eat(&Tok::Prime) {
            k += 1;
        }
        if self.peek() == Some(&Tok::Caret) && self.toks.get(self.at + 1).map(|t| &t.1) == Some(&Tok::LParen) {
            self.at += 2;
            k += self.small_int()?;
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(k)
    }

    fn atom(&mut self) -> Result<DiffPolynomial, SymbolicError> {
        let pos = self.pos();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of input"));
        };
        self.at += 1;
        match tok {
            Tok::Int(n) => {
                let mut r = BigRational::from_integer(n);
                if self.eat(&Tok::Slash) {
                    let dpos = self.pos();
                    let d = self.int()?;
                    if d.is_zero() {
                        return Err(SymbolicError::Syntax { pos: dpos, msg: "zero denominator".into() });
                    }
                    r /= BigRational::from_integer(d);
                }
                Ok(DiffPolynomial::constant(LambdaPoly::constant(r)))
            }
            Tok::L => Ok(DiffPolynomial::lambda()),
            Tok::U => Ok(DiffPolynomial::u(self.derivative_order()?)),
            Tok::Xi => Ok(DiffPolynomial::xi(self.derivative_order()?)),
            Tok::LBracket => {
                let a = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.expr()?;
                self.expect(Tok::RBracket, "`]`")?;
                a.bracket(&b).map_err(|e| locate(e, pos))
            }
            Tok::D => {
                self.expect(Tok::LParen, "`(` after D")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e.differentiate_total())
            }
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => Err(SymbolicError::Syntax { pos, msg: format!("unexpected {other:?}") }),
        }
    }
}

fn locate(e: SymbolicError, pos: usize) -> SymbolicError {
    match e {
        SymbolicError::OddProduct | SymbolicError::NotOdd => SymbolicError::Syntax { pos, msg: e.to_string() },
        other => other,
    }
}

/// Parses an expression into normal form.
pub fn parse(text: &str) -> Result<DiffPolynomial, SymbolicError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, end: text.len() };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

/// Symbolic Gardner inverse coefficients `(z_n, σ_n)`, `n = 0..=order`.
pub fn gardner_coefficients(order: usize) -> Result<Vec<(DiffPolynomial, DiffPolynomial)>, SymbolicError> {
    if order > MAX_SYMBOLIC_ORDER {
        return Err(SymbolicError::Order(order));
    }
    let lambda = LambdaPoly::monomial(BigRational::one(), 1);
    let mut z = vec![DiffPolynomial::u(0)];
    let mut s = vec![DiffPolynomial::xi(0)];
    let mut ds = vec![DiffPolynomial::xi(1)];
    for n in 1..=order {
        let mut zn = z[n - 1].differentiate_total().neg();
        let mut sn = ds[n - 1].neg();
        for a in 0..n.saturating_sub(1) {
            let b = n - 2 - a;
            zn = zn.sub(&z[a].mul(&z[b])?).sub(&ds[a].bracket(&s[b])?.scale(&lambda));
            sn = sn.sub(&z[a].mul(&s[b])?);
        }
        ds.push(sn.differentiate_total());
        z.push(zn);
        s.push(sn);
    }
    Ok(z.into_iter().zip(s).collect())
}

/// Settings for the Monte Carlo equivalence decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub points: usize,
    pub max_mode: usize,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { trials: 32, tol: 1e-8, seed: 15, points: 64, max_mode: 3 }
    }
}

/// One random instantiation used by the equivalence decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instantiation {
    pub trial: usize,
    pub algebra: String,
    pub lambda: f64,
    pub field_seed: u64,
}

/// Instantiation on which two densities were found to differ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub instantiation: Instantiation,
    /// `‖∫(p − q)‖∞`.
    pub deviation: f64,
    /// `max(1, ∫‖p − q‖∞ dx)`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Equal { max_relative_deviation: f64 },
    Different(Witness),
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Self::Equal { .. })
    }
}

/// Backends the trials alternate between; Grassmann nilpotency alone could
/// otherwise make inequivalent densities look equal.
pub const TRIAL_BACKENDS: [AlgebraDescriptor; 2] = [AlgebraDescriptor::Grassmann(3), AlgebraDescriptor::Symplectic(2)];

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Random fields and λ for trial `t`.
pub fn instantiation(mc: &MonteCarlo, trial: usize) -> Result<(Instantiation, EvenField, OddField), SymbolicError> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(mc.seed ^ splitmix(trial as u64)));
    let desc = TRIAL_BACKENDS[trial % TRIAL_BACKENDS.len()];
    let lambda = rng.gen_range(-2.0..2.0);
    let field_seed: u64 = rng.gen();
    let grid = PeriodicGrid::new(2.0 * std::f64::consts::PI, mc.points)?;
    let alg = Algebra::new(desc);
    let ic = build_initial_condition(
        &IcProfile::RandomBandlimited { max_mode: mc.max_mode, amplitude: 1.0, seed: field_seed },
        &grid,
        &alg,
    )?;
    Ok((Instantiation { trial, algebra: desc.to_string(), lambda, field_seed }, ic.even, ic.odd))
}

/// Integral of `p` and `∫‖p‖∞ dx` on one instantiation.
fn integrate_once(
    p: &DiffPolynomial,
    u: &EvenField,
    xi: &OddField,
    lambda: f64,
) -> Result<(Vec<f64>, f64), SymbolicError> {
    let f = p.instantiate_even(u, xi, lambda)?;
    let l1 = (0..u.grid().points())
        .map(|i| f.channels().iter().fold(0.0f64, |m, c| m.max(c[i].abs())))
        .sum::<f64>()
        * u.grid().dx();
    Ok((f.integral_coords(), l1))
}

/// Decides `∫p = ∫q` for all fields, i.e. `p ≡ q` modulo total derivatives.
pub fn equal_mod_total_derivative(
    p: &DiffPolynomial,
    q: &DiffPolynomial,
    mc: &MonteCarlo,
) -> Result<Verdict, SymbolicError> {
    if p.parity() != Some(Parity::Even) || q.parity() != Some(Parity::Even) {
        return Err(SymbolicError::NotEven);
    }
    let diff = p.sub(q);
    let results = exec::map_jobs(mc.trials, |t| -> Result<Witness, SymbolicError> {
        let (inst, u, xi) = instantiation(mc, t)?;
        let (integral, l1) = integrate_once(&diff, &u, &xi, inst.lambda)?;
        let deviation = integral.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(Witness { instantiation: inst, deviation, scale: l1.max(1.0) })
    });
    let mut worst = 0.0f64;
    for r in results {
        let w = r?;
        let rel = w.deviation / w.scale;
        if rel.is_nan() || rel > mc.tol {
            return Ok(Verdict::Different(w));
        }
        worst = worst.max(rel);
    }
    Ok(Verdict::Equal { max_relative_deviation: worst })
}

/// H0, H2, H4, H6 densities of the reference table.
pub fn reference_density(n: usize) -> Option<DiffPolynomial> {
    let text = match n {
        0 => "u",
        2 => "u^2 + L*[xi',xi]",
        4 => "2*u^3 + u'^2 + 4*L*u*[xi',xi] + L*[xi'',xi']",
        6 => concat!(
            "5*u^4 + 10*u*u'^2 + u''^2 + 15*L*u^2*[xi',xi] - 2*L*u*[xi'',xi'] - 8*L*u*[xi''',xi]",
            " + 3*L^2*[xi',xi]^2 + L*[xi''',xi'']"
        ),
        _ => return None,
    };
    Some(parse(text).expect("reference densities parse"))
}

/// Outcome for one order of the table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Eq15Status {
    /// `∫z_n ≡ c·H_n`.
    Proportional { constant: String },
    /// `∫z_n ≡ 0`.
    Trivial,
    /// Even order without a reference density.
    NoReference,
    /// No rational constant fits, or verification failed.
    Discrepancy { fitted: f64, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eq15Row {
    pub order: usize,
    pub terms: usize,
    #[serde(flatten)]
    pub status: Eq15Status,
    pub max_relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eq15Table {
    pub rows: Vec<Eq15Row>,
    pub trials: usize,
    pub tol: f64,
}

impl Eq15Table {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !matches!(r.status, Eq15Status::Discrepancy { .. }))
    }

    /// Fitted constants `c_n` for orders with a reference density.
    pub fn constants(&self) -> Vec<(usize, BigRational)> {
        self.rows
            .iter()
            .filter_map(|r| match &r.status {
                Eq15Status::Proportional { constant } => Some((r.order, parse_rational(constant)?)),
                _ => None,
            })
            .collect()
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    Some(BigRational::new(n.parse().ok()?, d.parse().ok()?))
}

/// Closest `p/q` with `q ≤ max_den` within `tol·max(1,|x|)` of `x`.
pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    (1..=max_den)
        .map(|q| {
            let p = (x * q as f64).round();
            ((p / q as f64 - x).abs(), p as i64, q)
        })
        .filter(|(err, _, _)| *err <= tol * x.abs().max(1.0))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p, q)| BigRational::new(p.into(), q.into()))
}

/// Conserved-density table from the Gardner coefficients: odd orders must
/// integrate to zero; even orders are fitted against the reference densities
/// by least squares, rationalized, then re-verified.
pub fn reproduce_eq15(max_order: usize, mc: &MonteCarlo) -> Result<Eq15Table, SymbolicError> {
    if !max_order.is_multiple_of(2) || max_order > 8 {
        return Err(SymbolicError::TableOrder(max_order));
    }
    let coeffs = gardner_coefficients(max_order)?;
    let mut rows = Vec::new();
    for (n, (zn, _)) in coeffs.iter().enumerate() {
        let (status, dev) = if n % 2 == 1 {
            match equal_mod_total_derivative(zn, &DiffPolynomial::zero(), mc)? {
                Verdict::Equal { max_relative_deviation } => (Eq15Status::Trivial, Some(max_relative_deviation)),
                Verdict::Different(w) => {
                    let detail = format!(
                        "integral nonzero on {} (relative deviation {:.3e})",
                        w.instantiation.algebra,
                        w.deviation / w.scale
                    );
                    (Eq15Status::Discrepancy { fitted: f64::NAN, detail }, None)
                }
            }
        } else if let Some(h) = reference_density(n) {
            fit_and_verify(zn, &h, mc)?
        } else {
            (Eq15Status::NoReference, None)
        };
        rows.push(Eq15Row { order: n, terms: zn.len(), status, max_relative_deviation: dev });
    }
    Ok(Eq15Table { rows, trials: mc.trials, tol: mc.tol })
}

fn fit_and_verify(
    zn: &DiffPolynomial,
    h: &DiffPolynomial,
    mc: &MonteCarlo,
) -> Result<(Eq15Status, Option<f64>), SymbolicError> {
    let pairs = exec::map_jobs(mc.trials, |t| -> Result<(Vec<f64>, Vec<f64>), SymbolicError> {
        let (inst, u, xi) = instantiation(mc, t)?;
        let a = zn.instantiate_even(&u, &xi, inst.lambda)?.integral_coords();
        let b = h.instantiate_even(&u, &xi, inst.lambda)?.integral_coords();
        Ok((a, b))
    });
    let (mut ab, mut bb) = (0.0, 0.0);
    for r in pairs {
        let (a, b) = r?;
        for (x, y) in a.iter().zip(&b) {
            ab += x * y;
            bb += y * y;
        }
    }
    let fitted = ab / bb;
    let Some(c) = rationalize(fitted, 64, 1e-6) else {
        let detail = "no rational constant with denominator <= 64 fits".to_string();
        return Ok((Eq15Status::Discrepancy { fitted, detail }, None));
    };
    match equal_mod_total_derivative(zn, &h.scale_rational(&c), mc)? {
        Verdict::Equal { max_relative_deviation } => {
            Ok((Eq15Status::Proportional { constant: rational_string(&c) }, Some(max_relative_deviation)))
        }
        Verdict::Different(w) => {
            let detail = format!(
                "c = {} fails on {} at λ = {:.4} (relative deviation {:.3e})",
                rational_string(&c),
                w.instantiation.algebra,
                w.instantiation.lambda,
                w.deviation / w.scale
            );
            Ok((Eq15Status::Discrepancy { fitted, detail }, None))
        }
    }
}

impl fmt::Display for Eq15Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5}  {:>6}  {:<14}  {:>10}", "order", "terms", "result", "max dev")?;
        for r in &self.rows {
            let result = match &r.status {
                Eq15Status::Proportional { constant } => format!("{constant} * H{}", r.order),
                Eq15Status::Trivial => "0".to_string(),
                Eq15Status::NoReference => "no reference".to_string(),
                Eq15Status::Discrepancy { fitted, .. } => format!("FAIL ({fitted:.6})"),
            };
            let dev = r.max_relative_deviation.map_or("-".to_string(), |d| format!("{d:.2e}"));
            writeln!(f, "{:>5}  {:>6}  {:<14}  {:>10}", format!("z{}", r.order), r.terms, result, dev)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> DiffPolynomial {
        parse(s).unwrap()
    }

    #[test]
    fn antisymmetry_normalizes() {
        assert!(p("[xi,xi]").is_zero());
        assert!(p("[xi',xi] + [xi,xi']").is_zero());
        assert_eq!(p("[xi,xi']"), p("-[xi',xi]"));
    }

    #[test]
    fn h2_parses_to_two_terms() {
        let h2 = p("u^2 + L*[xi',xi]");
        assert_eq!(h2.len(), 2);
        assert_eq!(h2.to_string(), "L*[xi',xi] + u^2");
    }

    #[test]
    fn leibniz_rule() {
        assert_eq!(p("D(u^2)"), p("2*u*u'"));
        assert_eq!(p("D([xi,xi'])"), p("[xi,xi'']"));
        assert_eq!(p("D(u*[xi',xi])"), p("u'*[xi',xi] + u*[xi'',xi]"));
        assert_eq!(p("D(u*xi)"), p("u'*xi + u*xi'"));
    }

    #[test]
    fn odd_products_rejected() {
        assert!(matches!(parse("xi*xi'"), Err(SymbolicError::Syntax { pos: 3, .. })));
        assert!(matches!(parse("xi^2"), Err(SymbolicError::Syntax { .. })));
        assert!(matches!(parse("[u,xi]"), Err(SymbolicError::Syntax { pos: 0, .. })));
        assert!(parse("u*xi").is_ok());
    }

    #[test]
    fn syntax_errors_carry_position() {
        assert!(matches!(parse("u + "), Err(SymbolicError::Syntax { pos: 4, .. })));
        assert!(matches!(parse("u + v"), Err(SymbolicError::Syntax { pos: 4, .. })));
        assert!(matches!(parse("(u"), Err(SymbolicError::Syntax { pos: 2, .. })));
        assert!(matches!(parse("1/0"), Err(SymbolicError::Syntax { pos: 2, .. })));
    }

    #[test]
    fn derivative_notations_agree() {
        assert_eq!(p("u''''"), p("u^(4)"));
        assert_eq!(p("xi'^(2)"), p("xi'''"));
        assert_eq!(p("u^(5)").to_string(), "u^(5)");
    }

    #[test]
    fn printing_round_trips() {
        for s in ["0", "-u", "1/2*u^2 - 3/4*L^2*[xi^(5),xi'']", "(1 + 2*L)*u'*xi", "7", "-L", "u^2*[xi',xi]^3"] {
            let a = p(s);
            assert_eq!(p(&a.to_string()), a, "{s}");
        }
    }

    #[test]
    fn low_gardner_coefficients() {
        let c = gardner_coefficients(2).unwrap();
        assert_eq!(c[0].0, p("u"));
        assert_eq!(c[1].0, p("-u'"));
        assert_eq!(c[2].0, p("u'' - u^2 - L*[xi',xi]"));
        assert_eq!(c[2].1, p("xi'' - u*xi"));
        assert!(gardner_coefficients(11).is_err());
    }

    #[test]
    fn gardner_coefficients_invert_the_map() {
        // substituting Σ εⁿ(zₙ, σₙ) into the Gardner map must cancel every
        // order ≥ 1
        let order = 6;
        let c = gardner_coefficients(order).unwrap();
        let lambda = LambdaPoly::monomial(BigRational::one(), 1);
        for n in 1..=order {
            let mut u = c[n].0.add(&c[n - 1].0.differentiate_total());
            let mut x = c[n].1.add(&c[n - 1].1.differentiate_total());
            for a in 0..n.saturating_sub(1) {
                let b = n - 2 - a;
                u = u.add(&c[a].0.mul(&c[b].0).unwrap());
                u = u.add(&c[a].1.differentiate_total().bracket(&c[b].1).unwrap().scale(&lambda));
                x = x.add(&c[a].0.mul(&c[b].1).unwrap());
            }
            assert!(u.is_zero() && x.is_zero(), "order {n}");
        }
    }

    #[test]
    fn grading_is_preserved() {
        for (z, s) in gardner_coefficients(5).unwrap() {
            assert_eq!(z.parity(), Some(Parity::Even));
            assert_eq!(s.parity(), Some(Parity::Odd));
            assert_eq!(z.differentiate_total().parity(), Some(Parity::Even));
        }
    }

    #[test]
    fn total_derivatives_are_equivalent_to_zero() {
        let mc = MonteCarlo { trials: 8, ..MonteCarlo::default() };
        let h4 = reference_density(4).unwrap();
        let q = h4.add(&p("D(u^3 + u*[xi',xi])"));
        assert!(equal_mod_total_derivative(&h4, &q, &mc).unwrap().is_equal());
        let r = h4.add(&p("u^2"));
        assert!(matches!(equal_mod_total_derivative(&h4, &r, &mc).unwrap(), Verdict::Different(_)));
        assert_eq!(equal_mod_total_derivative(&p("xi"), &p("xi"), &mc), Err(SymbolicError::NotEven));
    }

    #[test]
    fn z2_is_minus_h2() {
        let mc = MonteCarlo { trials: 8, ..MonteCarlo::default() };
        let z = gardner_coefficients(3).unwrap();
        let h2 = reference_density(2).unwrap();
        assert!(equal_mod_total_derivative(&z[2].0, &h2.neg(), &mc).unwrap().is_equal());
        assert!(equal_mod_total_derivative(&z[3].0, &DiffPolynomial::zero(), &mc).unwrap().is_equal());
    }

    #[test]
    fn rationalize_small_fractions() {
        assert_eq!(rationalize(-1.0 + 1e-12, 64, 1e-6), Some(BigRational::from_integer((-1).into())));
        assert_eq!(rationalize(0.75, 64, 1e-9), Some(BigRational::new(3.into(), 4.into())));
        assert_eq!(rationalize(std::f64::consts::PI, 8, 1e-9), None);
    }

    #[test]
    fn lambda_poly_eval() {
        let q = p("(1 + 2*L + 3*L^2)*u");
        assert_eq!(q.terms().next().unwrap().1.eval(2.0), 17.0);
    }
}
