use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monomial over `(w₁..w_n, Θ₁..Θ_d)` with `wᵢ² = wᵢ` applied: `w` is a sorted set of
/// weight indices, `t` holds the `Θ` exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub w: Vec<u32>,
    pub t: Vec<u8>,
}

impl Monomial {
    pub fn one(d: usize) -> Self {
        Self { w: Vec::new(), t: vec![0; d] }
    }

    pub fn w(i: usize, d: usize) -> Self {
        Self {
            w: vec![i as u32],
            t: vec![0; d],
        }
    }

    pub fn theta(j: usize, d: usize) -> Self {
        let mut t = vec![0; d];
        t[j] = 1;
        Self { w: Vec::new(), t }
    }

    pub fn degree(&self) -> usize {
        self.w.len() + self.t.iter().map(|&e| e as usize).sum::<usize>()
    }

    /// Product with the idempotence reduction.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut w = Vec::with_capacity(self.w.len() + other.w.len());
        let (mut i, mut j) = (0, 0);
        while i < self.w.len() || j < other.w.len() {
            match (self.w.get(i), other.w.get(j)) {
                (Some(a), Some(b)) if a == b => {
                    w.push(*a);
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if a < b => {
                    w.push(*a);
                    i += 1;
                }
                (Some(_), Some(b)) => {
                    w.push(*b);
                    j += 1;
                }
                (Some(a), None) => {
                    w.push(*a);
                    i += 1;
                }
                (None, Some(b)) => {
                    w.push(*b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        let t = self.t.iter().zip(&other.t).map(|(a, b)| a + b).collect();
        Monomial { w, t }
    }

    /// Value at a point.
    pub fn eval(&self, w: &[f64], theta: &[f64]) -> f64 {
        let mut v: f64 = self.w.iter().map(|&i| w[i as usize]).product();
        for (j, &e) in self.t.iter().enumerate() {
            v *= theta[j].powi(e as i32);
        }
        v
    }

    /// Dense exponent vector over `(w₁..w_n, Θ₁..Θ_d)`.
    pub fn dense(&self, n: usize) -> Vec<u8> {
        let mut e = vec![0u8; n];
        for &i in &self.w {
            e[i as usize] = 1;
        }
        e.extend_from_slice(&self.t);
        e
    }

    /// Graded lexicographic order: lower degree first, then larger exponent vectors first.
    pub fn grlex_cmp(&self, other: &Monomial, n: usize) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.dense(n).cmp(&self.dense(n)))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.w.iter().map(|i| format!("w{}", i + 1)).collect();
        for (j, &e) in self.t.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(format!("T{}", j + 1)),
                e => parts.push(format!("T{}^{e}", j + 1)),
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Number of reduced monomials of degree at most `deg` in `n` weights and `d` parameters.
pub fn count_monomials(n: usize, d: usize, deg: usize) -> f64 {
    let mut total = 0.0;
    for a in 0..=deg.min(n) {
        for b in 0..=(deg - a) {
            total += binom(n, a) * binom(b + d - 1, d - 1);
        }
    }
    total
}

/// Ordered, duplicate-free list of reduced monomials of degree `≤ degree`.
#[derive(Clone, Debug, Serialize)]
pub struct MonomialBasis {
    pub n: usize,
    pub d: usize,
    pub degree: usize,
    pub monomials: Vec<Monomial>,
    #[serde(skip)]
    index: HashMap<Monomial, usize>,
}

impl PartialEq for MonomialBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d && self.degree == other.degree && self.monomials == other.monomials
    }
}

fn theta_exponents(d: usize, deg: usize) -> Vec<Vec<u8>> {
    if d == 0 {
        return if deg == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in theta_exponents(d - 1, deg - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

fn w_subsets(n: usize, k: usize) -> Vec<Vec<u32>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut c: Vec<u32> = (0..k as u32).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        while i > 0 && c[i - 1] as usize == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

impl MonomialBasis {
    /// Builds the graded-lex basis; refuses when the size exceeds `max_size`.
    pub fn build(n: usize, d: usize, degree: usize, max_size: f64) -> Result<Self> {
        if n == 0 || d == 0 || degree == 0 {
            return Err(Error::InvalidSpec("basis needs n, d, D >= 1".into()));
        }
        let size = count_monomials(n, d, degree);
        if size > max_size {
            return Err(Error::MemoryBudget {
                bytes: size * size * 8.0,
                budget: max_size * max_size * 8.0,
            });
        }
        let mut monomials = Vec::with_capacity(size as usize);
        for total in 0..=degree {
            for a in 0..=total.min(n) {
                let ts = theta_exponents(d, total - a);
                for w in w_subsets(n, a) {
                    for t in &ts {
                        monomials.push(Monomial { w: w.clone(), t: t.clone() });
                    }
                }
            }
        }
        monomials.sort_by(|a, b| a.grlex_cmp(b, n));
        Ok(Self::from_monomials(n, d, degree, monomials))
    }

    fn from_monomials(n: usize, d: usize, degree: usize, monomials: Vec<Monomial>) -> Self {
        let index = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Self {
            n,
            d,
            degree,
            monomials,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Number of leading basis elements of degree `≤ s`.
    pub fn prefix_len(&self, s: usize) -> usize {
        self.monomials.iter().take_while(|m| m.degree() <= s).count()
    }
}
