//! Univariate polynomials in a formal parameter `t`, used to push curves
//! through polynomial maps and read off Taylor coefficients.

use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

/// `c[0] + c[1] t + c[2] t^2 + ...`; an empty coefficient list is zero.
///
/// Products are exact (no truncation); call [`TaylorPoly::truncate`] when
/// only low orders matter.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorPoly<T> {
    c: Vec<T>,
}

impl<T> TaylorPoly<T> {
    pub fn new(c: Vec<T>) -> Self {
        TaylorPoly { c }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

impl<T: Clone + Zero> TaylorPoly<T> {
    pub fn constant(v: T) -> Self {
        TaylorPoly { c: vec![v] }
    }

    /// Coefficient of `t^k` (zero beyond the stored length).
    pub fn coeff(&self, k: usize) -> T {
        self.c.get(k).cloned().unwrap_or_else(T::zero)
    }

    /// Drops every coefficient of order `> order`.
    pub fn truncate(mut self, order: usize) -> Self {
        self.c.truncate(order + 1);
        self
    }
}

impl<T: Clone + Zero + Mul<Output = T>> TaylorPoly<T> {
    pub fn scale(&self, s: T) -> Self {
        TaylorPoly {
            c: self.c.iter().map(|v| v.clone() * s.clone()).collect(),
        }
    }
}

impl<T: Clone + Zero> Add for TaylorPoly<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (mut long, short) = if self.c.len() >= rhs.c.len() {
            (self.c, rhs.c)
        } else {
            (rhs.c, self.c)
        };
        for (a, b) in long.iter_mut().zip(short) {
            *a = a.clone() + b;
        }
        TaylorPoly { c: long }
    }
}

impl<T: Clone + Zero + Neg<Output = T>> Neg for TaylorPoly<T> {
    type Output = Self;
    fn neg(self) -> Self {
        TaylorPoly {
            c: self.c.into_iter().map(|v| -v).collect(),
        }
    }
}

impl<T: Clone + Zero + Neg<Output = T>> Sub for TaylorPoly<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Clone + Zero + Mul<Output = T>> Mul for TaylorPoly<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.c.is_empty() || rhs.c.is_empty() {
            return TaylorPoly { c: Vec::new() };
        }
        let mut out = vec![T::zero(); self.c.len() + rhs.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in rhs.c.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        TaylorPoly { c: out }
    }
}

impl<T: Clone + Zero> Zero for TaylorPoly<T> {
    fn zero() -> Self {
        TaylorPoly { c: Vec::new() }
    }

    fn is_zero(&self) -> bool {
        self.c.iter().all(Zero::is_zero)
    }
}

impl<T: Clone + Zero + One + Mul<Output = T>> One for TaylorPoly<T> {
    fn one() -> Self {
        TaylorPoly { c: vec![T::one()] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_linear_factors() {
        let a = TaylorPoly::new(vec![1.0, 1.0]);
        let b = TaylorPoly::new(vec![-1.0, 1.0]);
        assert_eq!((a * b).coeffs(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_annihilates_and_truncation_drops_high_orders() {
        let a = TaylorPoly::new(vec![2.0, 3.0, 4.0]);
        assert!((a.clone() * TaylorPoly::zero()).is_zero());
        assert_eq!(a.clone().truncate(1).coeffs(), &[2.0, 3.0]);
        assert_eq!(a.coeff(7), 0.0);
    }

    #[test]
    fn subtraction_pads_shorter_operand() {
        let a = TaylorPoly::new(vec![1.0]);
        let b = TaylorPoly::new(vec![0.0, 0.0, 5.0]);
        assert_eq!((a - b).coeffs(), &[1.0, 0.0, -5.0]);
    }
}
