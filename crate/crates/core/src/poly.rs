//! Sparse multivariate polynomials with real or quaternion coefficients.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::quat::Quaternion;

pub trait Coeff:
    Copy + PartialEq + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Coeff for Quaternion {
    fn zero() -> Self {
        Quaternion::ZERO
    }
    fn is_zero(&self) -> bool {
        *self == Quaternion::ZERO
    }
}

pub type Exponents = Vec<u16>;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly<C: Coeff = f64> {
    nvars: usize,
    terms: BTreeMap<Exponents, C>,
}

pub type QPoly = Poly<Quaternion>;

impl<C: Coeff> Poly<C> {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    pub fn monomial(exps: Exponents, c: C) -> Self {
        let nvars = exps.len();
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        p
    }

    /// `c * x_i`.
    pub fn var(nvars: usize, i: usize, c: C) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, c)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: &[u16]) -> C {
        self.terms.get(exps).copied().unwrap_or_else(C::zero)
    }

    pub fn add_term(&mut self, exps: Exponents, c: C) {
        debug_assert_eq!(exps.len(), self.nvars);
        // Cancelled terms are dropped so that degree bookkeeping stays exact.
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                if !c.is_zero() {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    /// Product with a real polynomial in the same variables.
    pub fn mul_real(&self, r: &Poly<f64>) -> Self {
        assert_eq!(self.nvars, r.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &r.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                let k = d[i];
                d[i] -= 1;
                out.add_term(d, c * k as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> C {
        assert_eq!(x.len(), self.nvars);
        let mut acc = C::zero();
        for (e, &c) in &self.terms {
            acc = acc + c * monomial_value(e, x);
        }
        acc
    }
}

impl<C: Coeff> Add for &Poly<C> {
    type Output = Poly<C>;
    fn add(self, o: &Poly<C>) -> Poly<C> {
        assert_eq!(self.nvars, o.nvars);
        let mut out = self.clone();
        for (e, &c) in &o.terms {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl<C: Coeff> Add for Poly<C> {
    type Output = Poly<C>;
    fn add(self, o: Poly<C>) -> Poly<C> {
        &self + &o
    }
}

impl<C: Coeff> Sub for &Poly<C> {
    type Output = Poly<C>;
    fn sub(self, o: &Poly<C>) -> Poly<C> {
        assert_eq!(self.nvars, o.nvars);
        let mut out = self.clone();
        for (e, &c) in &o.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl Mul for &Poly<f64> {
    type Output = Poly<f64>;
    fn mul(self, o: &Poly<f64>) -> Poly<f64> {
        self.mul_real(o)
    }
}

impl Poly<f64> {
    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

pub fn monomial_value(e: &[u16], x: &[f64]) -> f64 {
    e.iter()
        .zip(x)
        .filter(|(&k, _)| k > 0)
        .map(|(&k, &xi)| xi.powi(k as i32))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_derivative() {
        // p = 3 x0^2 x1 - x1 + 2
        let mut p = Poly::<f64>::zero(2);
        p.add_term(vec![2, 1], 3.0);
        p.add_term(vec![0, 1], -1.0);
        p.add_term(vec![0, 0], 2.0);
        assert_eq!(p.eval(&[2.0, 3.0]), 3.0 * 4.0 * 3.0 - 3.0 + 2.0);
        let dx = p.derivative(0);
        assert_eq!(dx.eval(&[2.0, 3.0]), 6.0 * 2.0 * 3.0);
        let sq = p.pow(2);
        assert_eq!(sq.eval(&[2.0, 3.0]), 35.0f64.powi(2));
        let zero = &p - &p;
        assert!(zero.is_empty());
        assert_eq!(p.total_degree(), 3);
    }

    #[test]
    fn quaternion_coefficients() {
        let q = QPoly::var(4, 0, Quaternion::ONE) + QPoly::var(4, 1, -Quaternion::I);
        let r = Poly::<f64>::var(4, 0, 2.0);
        let prod = q.mul_real(&r);
        let v = prod.eval(&[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(v, Quaternion::new(2.0, -4.0, 0.0, 0.0));
    }
}
