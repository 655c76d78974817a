use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use super::basis::Monomial;

/// Sparse polynomial in `(w, Θ)` with the idempotence reduction built into multiplication.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    pub d: usize,
    pub terms: HashMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Self { d, terms: HashMap::new() }
    }

    pub fn constant(c: f64, d: usize) -> Self {
        Self::monomial(Monomial::one(d), c)
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let d = m.t.len();
        let mut p = Self::zero(d);
        p.add_term(m, c);
        p
    }

    pub fn w(i: usize, d: usize) -> Self {
        Self::monomial(Monomial::w(i, d), 1.0)
    }

    pub fn theta(j: usize, d: usize) -> Self {
        Self::monomial(Monomial::theta(j, d), 1.0)
    }

    /// `c₀ + Σⱼ cⱼ Θⱼ`.
    pub fn affine_theta(c0: f64, coef: &[f64]) -> Self {
        let d = coef.len();
        let mut p = Self::constant(c0, d);
        for (j, &c) in coef.iter().enumerate() {
            p.add_term(Monomial::theta(j, d), c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            d: self.d,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Self {
        let mut out = Self::zero(self.d);
        for (k, c) in &self.terms {
            out.add_term(k.mul(m), *c);
        }
        out
    }

    pub fn eval(&self, w: &[f64], theta: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(w, theta)).sum()
    }

    pub fn coef_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Terms in a deterministic order.
    pub fn sorted_terms(&self, n: usize) -> Vec<(Monomial, f64)> {
        let mut v: Vec<(Monomial, f64)> = self.terms.iter().map(|(m, c)| (m.clone(), *c)).collect();
        v.sort_by(|a, b| a.0.grlex_cmp(&b.0, n));
        v
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.d);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term(a.mul(b), ca * cb);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idempotent_product_cancels() {
        // w(1 - w) = w - w² = 0
        let w = Poly::w(0, 1);
        let one_minus = &Poly::constant(1.0, 1) - &w;
        let p = &w * &one_minus;
        assert!(p.terms.values().all(|c| *c == 0.0));
    }

    #[test]
    fn evaluation() {
        let p = &Poly::affine_theta(1.0, &[2.0, -1.0]) * &Poly::w(0, 2);
        assert_eq!(p.eval(&[1.0], &[3.0, 4.0]), 3.0);
        assert_eq!(p.degree(), 2);
    }
}
