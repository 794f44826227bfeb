//! Exact polynomial expressions over ambient coordinates `x0 .. x{N-1}`.
//!
//! An [`Expr`] is a small tree (constants, variables, sums, products and
//! integer powers). Every derivative operation goes through the expanded
//! normal form [`Poly`], a sorted map from monomials to exact rational
//! coefficients, so two expressions that are equal as polynomials normalize
//! to the same tree.
//!
//! Scenario files use a prefix text form, e.g. `(+ (* 2 (^ x0 2)) x1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::jet::TaylorPoly;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("expression uses variable x{needed} but the point has dimension {got}")]
    DimensionMismatch { needed: usize, got: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("derivative order must be positive")]
    ZeroOrder,
}

/// Coefficient ring an expression can be evaluated over.
///
/// Implemented for `f32`, `f64`, exact [`Rational`]s and truncated Taylor
/// polynomials, which is how curve jets are pushed through a polynomial.
pub trait Ring: Clone + Zero + One + Sub<Output = Self> + Neg<Output = Self> {
    fn from_rational(q: &Rational) -> Self;
}

impl Ring for f64 {
    fn from_rational(q: &Rational) -> Self {
        q.to_f64().unwrap_or(f64::NAN)
    }
}

impl Ring for f32 {
    fn from_rational(q: &Rational) -> Self {
        q.to_f32().unwrap_or(f32::NAN)
    }
}

impl Ring for Rational {
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
}

impl<T: Ring> Ring for TaylorPoly<T> {
    fn from_rational(q: &Rational) -> Self {
        TaylorPoly::constant(T::from_rational(q))
    }
}

pub fn rational(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact rational closest to `v` with a power-of-two denominator.
pub fn rational_from_f64(v: f64) -> Rational {
    Rational::from_float(v).unwrap_or_else(Rational::zero)
}

// ---------------------------------------------------------------------------
// Normal form
// ---------------------------------------------------------------------------

/// A monomial `x_{v1}^{e1} ... x_{vk}^{ek}` with strictly increasing variables
/// and positive exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(i: usize) -> Self {
        Monomial(vec![(i, 1)])
    }

    pub fn factors(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.0
            .iter()
            .find(|&&(v, _)| v == var)
            .map_or(0, |&(_, e)| e)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Derivative with respect to `var`: returns the multiplicity and the
    /// reduced monomial, or `None` if `var` does not occur.
    fn diff(&self, var: usize) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|&(v, _)| v == var)?;
        let e = self.0[pos].1;
        let mut out = self.0.clone();
        if e == 1 {
            out.remove(pos);
        } else {
            out[pos].1 = e - 1;
        }
        Some((e, Monomial(out)))
    }
}

/// Expanded polynomial with exact coefficients; zero coefficients are never
/// stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn int(c: i64) -> Self {
        Poly::constant(rational(c))
    }

    pub fn var(i: usize) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(i), Rational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Number of variables needed to evaluate this polynomial.
    pub fn min_dim(&self) -> usize {
        self.terms
            .keys()
            .filter_map(|m| m.0.last().map(|&(v, _)| v + 1))
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, q)| (m.clone(), q * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::int(1);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn diff(&self, var: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            if let Some((e, dm)) = m.diff(var) {
                out.add_term(dm, c * rational(e as i64));
            }
        }
        out
    }

    pub fn gradient(&self, dim: usize) -> Vec<Poly> {
        (0..dim).map(|i| self.diff(i)).collect()
    }

    /// Substitutes `x_i -> images[i]` for every variable (variables beyond
    /// `images.len()` are kept).
    pub fn substitute(&self, images: &[Poly]) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut term = Poly::constant(c.clone());
            for &(v, e) in m.factors() {
                let base = images.get(v).cloned().unwrap_or_else(|| Poly::var(v));
                term = &term * &base.pow(e);
            }
            out = &out + &term;
        }
        out
    }

    /// Renames variable `i` to `i + offset`.
    pub fn shift_vars(&self, offset: usize) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    (
                        Monomial(m.0.iter().map(|&(v, e)| (v + offset, e)).collect()),
                        c.clone(),
                    )
                })
                .collect(),
        }
    }

    pub fn eval<T: Ring>(&self, x: &[T]) -> Result<T, ExprError> {
        let need = self.min_dim();
        if need > x.len() {
            return Err(ExprError::DimensionMismatch {
                needed: need - 1,
                got: x.len(),
            });
        }
        Ok(self.compile::<T>().eval(x))
    }

    /// Converts coefficients once so repeated evaluation is cheap.
    pub fn compile<T: Ring>(&self) -> CompiledPoly<T> {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (T::from_rational(c), m.0.clone()))
                .collect(),
            min_dim: self.min_dim(),
        }
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut factors: Vec<Expr> =
                    m.0.iter()
                        .map(|&(v, e)| {
                            if e == 1 {
                                Expr::Var(v)
                            } else {
                                Expr::Pow(Box::new(Expr::Var(v)), e)
                            }
                        })
                        .collect();
                if factors.is_empty() {
                    Expr::Const(c.clone())
                } else if c.is_one() && factors.len() == 1 {
                    factors.pop().unwrap()
                } else if c.is_one() {
                    Expr::Mul(factors)
                } else {
                    factors.insert(0, Expr::Const(c.clone()));
                    Expr::Mul(factors)
                }
            })
            .collect();
        match terms.len() {
            0 => Expr::Const(Rational::zero()),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&rational(-1))
    }
}

/// A polynomial with coefficients already converted into the ring `T`.
#[derive(Clone, Debug)]
pub struct CompiledPoly<T> {
    terms: Vec<(T, Vec<(usize, u32)>)>,
    min_dim: usize,
}

impl<T: Ring> CompiledPoly<T> {
    pub fn min_dim(&self) -> usize {
        self.min_dim
    }

    /// Evaluates without a dimension check; callers guarantee
    /// `x.len() >= self.min_dim()`.
    pub fn eval(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (c, factors) in &self.terms {
            let mut term = c.clone();
            for &(v, e) in factors {
                for _ in 0..e {
                    term = term * x[v].clone();
                }
            }
            acc = acc + term;
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Expression trees
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Rational),
    Var(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn int(c: i64) -> Expr {
        Expr::Const(rational(c))
    }

    pub fn pow(self, e: u32) -> Expr {
        Expr::Pow(Box::new(self), e)
    }

    /// `sum_i coeffs[i] * x_i`.
    pub fn linear(coeffs: &[i64]) -> Expr {
        Expr::Add(
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| Expr::Mul(vec![Expr::int(c), Expr::Var(i)]))
                .collect(),
        )
    }

    pub fn to_poly(&self) -> Poly {
        match self {
            Expr::Const(c) => Poly::constant(c.clone()),
            Expr::Var(i) => Poly::var(*i),
            Expr::Add(xs) => xs.iter().fold(Poly::zero(), |acc, e| &acc + &e.to_poly()),
            Expr::Mul(xs) => xs.iter().fold(Poly::int(1), |acc, e| &acc * &e.to_poly()),
            Expr::Pow(b, e) => b.to_poly().pow(*e),
        }
    }

    /// Expanded normal form with sorted monomials.
    pub fn normalize(&self) -> Expr {
        self.to_poly().to_expr()
    }

    /// Smallest point dimension this expression can be evaluated at.
    pub fn min_dim(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().map(Expr::min_dim).max().unwrap_or(0),
            Expr::Pow(b, _) => b.min_dim(),
        }
    }

    pub fn evaluate<T: Ring>(&self, x: &[T]) -> Result<T, ExprError> {
        let need = self.min_dim();
        if need > x.len() {
            return Err(ExprError::DimensionMismatch {
                needed: need - 1,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked<T: Ring>(&self, x: &[T]) -> T {
        match self {
            Expr::Const(c) => T::from_rational(c),
            Expr::Var(i) => x[*i].clone(),
            Expr::Add(xs) => xs
                .iter()
                .fold(T::zero(), |acc, e| acc + e.eval_unchecked(x)),
            Expr::Mul(xs) => xs.iter().fold(T::one(), |acc, e| acc * e.eval_unchecked(x)),
            Expr::Pow(b, e) => {
                let base = b.eval_unchecked(x);
                (0..*e).fold(T::one(), |acc, _| acc * base.clone())
            }
        }
    }

    pub fn differentiate(&self, i: usize) -> Expr {
        self.to_poly().diff(i).to_expr()
    }

    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        let p = self.to_poly();
        (0..dim).map(|i| p.diff(i).to_expr()).collect()
    }

    /// `d^order/dt^order e(x + t v)` at `t = 0`.
    ///
    /// Evaluated by pushing the line `x + t v` through the polynomial as a
    /// Taylor polynomial in `t`, which is exact whenever `T` is exact.
    pub fn directional_derivative<T: Ring>(
        &self,
        x: &[T],
        v: &[T],
        order: u32,
    ) -> Result<T, ExprError> {
        if order == 0 {
            return Err(ExprError::ZeroOrder);
        }
        if x.len() != v.len() {
            return Err(ExprError::DimensionMismatch {
                needed: x.len().max(v.len()) - 1,
                got: x.len().min(v.len()),
            });
        }
        let line: Vec<TaylorPoly<T>> = x
            .iter()
            .zip(v)
            .map(|(a, b)| TaylorPoly::new(vec![a.clone(), b.clone()]))
            .collect();
        let value = self.evaluate(&line)?;
        let mut fact = T::one();
        let mut k = T::one();
        for _ in 0..order {
            fact = fact * k.clone();
            k = k + T::one();
        }
        Ok(value.coeff(order as usize) * fact)
    }
}

impl From<&Poly> for Expr {
    fn from(p: &Poly) -> Expr {
        p.to_expr()
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, rhs])
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, Expr::Mul(vec![Expr::int(-1), rhs])])
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(vec![self, rhs])
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Mul(vec![Expr::int(-1), self])
    }
}

// ---------------------------------------------------------------------------
// Prefix text form
// ---------------------------------------------------------------------------

fn fmt_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", fmt_rational(c)),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Add(xs) | Expr::Mul(xs) => {
                let op = if matches!(self, Expr::Add(_)) {
                    '+'
                } else {
                    '*'
                };
                write!(f, "({op}")?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                write!(f, ")")
            }
            Expr::Pow(b, e) => write!(f, "(^ {b} {e})"),
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src: s, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn token(&mut self) -> &str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(')') => Err(self.err("unexpected ')'")),
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                let op_pos = self.pos;
                let op = self.token().to_string();
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(self.err("missing ')'")),
                        _ => args.push(self.expr()?),
                    }
                }
                let bad = |msg: &str| ExprError::Parse {
                    pos: op_pos,
                    msg: msg.to_string(),
                };
                match op.as_str() {
                    "+" => Ok(Expr::Add(args)),
                    "*" => Ok(Expr::Mul(args)),
                    "-" => match args.len() {
                        1 => Ok(-args.pop().unwrap()),
                        0 => Err(bad("'-' needs at least one argument")),
                        _ => {
                            let mut it = args.into_iter();
                            let first = it.next().unwrap();
                            Ok(it.fold(first, |acc, e| acc - e))
                        }
                    },
                    "^" => {
                        if args.len() != 2 {
                            return Err(bad("'^' takes a base and an exponent"));
                        }
                        let exp = match &args[1] {
                            Expr::Const(c) if c.is_integer() && !c.is_negative() => c
                                .to_integer()
                                .to_u32()
                                .ok_or_else(|| bad("exponent too large"))?,
                            _ => return Err(bad("exponent must be a non-negative integer")),
                        };
                        Ok(Expr::Pow(Box::new(args.swap_remove(0)), exp))
                    }
                    _ => Err(bad(&format!("unknown operator '{op}'"))),
                }
            }
            Some(_) => {
                let at = self.pos;
                let tok = self.token().to_string();
                parse_atom(&tok).ok_or(ExprError::Parse {
                    pos: at,
                    msg: format!("bad atom '{tok}'"),
                })
            }
        }
    }
}

fn parse_atom(tok: &str) -> Option<Expr> {
    if let Some(idx) = tok.strip_prefix('x') {
        if !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) {
            return idx.parse().ok().map(Expr::Var);
        }
        return None;
    }
    parse_number(tok).map(Expr::Const)
}

fn parse_number(tok: &str) -> Option<Rational> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    if body.is_empty() {
        return None;
    }
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let value = if let Some((n, d)) = body.split_once('/') {
        if !digits(n) || !digits(d) {
            return None;
        }
        let d: BigInt = d.parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Rational::new(n.parse().ok()?, d)
    } else if let Some((i, frac)) = body.split_once('.') {
        if !(digits(i) || i.is_empty()) || !digits(frac) {
            return None;
        }
        let whole: BigInt = format!("{i}{frac}").parse().ok()?;
        let denom = num_traits::pow(BigInt::from(10), frac.len());
        Rational::new(whole, denom)
    } else {
        if !digits(body) {
            return None;
        }
        Rational::from_integer(body.parse().ok()?)
    };
    Some(if neg { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Rational {
        rational(n)
    }

    fn parse(s: &str) -> Expr {
        s.parse().unwrap()
    }

    #[test]
    fn evaluates_monomial_exactly() {
        let e = parse("(* (^ x0 2) x1)");
        assert_eq!(e.evaluate(&[q(2), q(3)]).unwrap(), q(12));
        assert_eq!(e.evaluate(&[2.0, 3.0]).unwrap(), 12.0);
    }

    #[test]
    fn fold_model_vanishes_at_origin() {
        // x_n^{k+1} with k = 1, n = 2 (variable x1)
        let e = parse("(^ x1 2)");
        assert_eq!(e.evaluate(&[q(5), q(0)]).unwrap(), q(0));
    }

    #[test]
    fn sphere_constraint_at_unit_vectors() {
        let e = parse("(+ (^ x0 2) (^ x1 2) (^ x2 2) -1)");
        for i in 0..3 {
            let mut x = vec![q(0); 3];
            x[i] = q(1);
            assert!(e.evaluate(&x).unwrap().is_zero());
        }
        let third = Rational::new(BigInt::from(1), BigInt::from(3));
        let two_thirds = Rational::new(BigInt::from(2), BigInt::from(3));
        let x = vec![third, two_thirds.clone(), two_thirds];
        assert!(e.evaluate(&x).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = parse("(+ x0 x4)");
        assert_eq!(
            e.evaluate(&[1.0, 2.0]),
            Err(ExprError::DimensionMismatch { needed: 4, got: 2 })
        );
    }

    #[test]
    fn derivative_of_monomial() {
        let e = parse("(* (^ x0 2) x1)");
        assert_eq!(e.differentiate(0), parse("(* 2 x0 x1)").normalize());
    }

    #[test]
    fn derivative_of_cusp_chain_normal_form() {
        // x2^3 + x0 x2^1 ... with n = 2 playing x_n; k = 1:
        // x_n^{k+2} + x_1 x_n^{k} + x_2 x_n^{k-1}, variables x_1 = x0, x_2 = x1, x_n = x2
        let e = parse("(+ (^ x2 3) (* x0 (^ x2 2)) (* x1 x2))");
        let expected = parse("(+ (* 3 (^ x2 2)) (* 2 x0 x2) x1)").normalize();
        assert_eq!(e.differentiate(2), expected);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        assert_eq!(parse("7/3").differentiate(0), Expr::int(0));
    }

    #[test]
    fn gradient_examples() {
        let e = parse("(+ (^ x0 2) (^ x1 2))");
        assert_eq!(
            e.gradient(2),
            vec![parse("(* 2 x0)").normalize(), parse("(* 2 x1)").normalize()]
        );
        // fold model x_n^2 + x_{n+1}^2 - x_{n+2}^2 with n = 1
        let fold = parse("(+ x0 (^ x1 2) (^ x2 2) (- (^ x3 2)))");
        let g = fold.gradient(4);
        assert_eq!(g[0], Expr::int(1));
        assert_eq!(g[1], parse("(* 2 x1)").normalize());
        assert_eq!(g[3], parse("(* -2 x3)").normalize());
        let lin = Expr::linear(&[3, -1, 4]);
        assert_eq!(
            lin.gradient(3),
            vec![Expr::int(3), Expr::int(-1), Expr::int(4)]
        );
    }

    #[test]
    fn directional_derivative_examples() {
        let e = parse("(^ x0 3)");
        assert_eq!(e.directional_derivative(&[q(0)], &[q(1)], 3).unwrap(), q(6));
        // x_n^{k+3} with k = 1
        let e = parse("(^ x1 4)");
        let x = [q(0), q(0)];
        let v = [q(0), q(1)];
        assert_eq!(e.directional_derivative(&x, &v, 2).unwrap(), q(0));
        assert_eq!(e.directional_derivative(&x, &v, 4).unwrap(), q(24));
        assert_eq!(
            e.directional_derivative(&x, &v, 0),
            Err(ExprError::ZeroOrder)
        );
    }

    #[test]
    fn directional_derivative_matches_central_difference() {
        // a fixed "random" cubic
        let e = parse("(+ (* 3/2 (^ x0 3)) (* -2 x0 x1 x2) (^ x2 2) (* 5 x1) 1)");
        let x = [0.3, -0.7, 1.1];
        let v = [0.6, 0.2, -0.5];
        let exact = e.directional_derivative(&x, &v, 2).unwrap();
        let h = 1e-4;
        let at = |t: f64| {
            let p: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            e.evaluate(&p).unwrap()
        };
        let fd = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
    }

    #[test]
    fn parses_decimals_and_rationals() {
        assert_eq!(
            parse("0.1"),
            Expr::Const(Rational::new(1.into(), 10.into()))
        );
        assert_eq!(
            parse("-3/6"),
            Expr::Const(Rational::new((-1).into(), 2.into()))
        );
        assert_eq!(
            parse("(- x0 x1 1)").normalize(),
            parse("(+ x0 (* -1 x1) -1)").normalize()
        );
        assert!("(^ x0 x1)".parse::<Expr>().is_err());
        assert!("(+ x0".parse::<Expr>().is_err());
        assert!("y0".parse::<Expr>().is_err());
        assert!("(% x0 1)".parse::<Expr>().is_err());
    }

    #[test]
    fn normal_form_is_canonical() {
        let a = parse("(* (+ x0 x1) (+ x0 (- x1)))");
        let b = parse("(+ (^ x0 2) (* -1 (^ x1 2)))");
        assert_eq!(a.normalize(), b.normalize());
        assert_eq!(a.normalize().normalize(), a.normalize());
    }
}
