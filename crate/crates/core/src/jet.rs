//! Truncated Taylor series in time, used to differentiate the nested surfaces.
//!
//! A jet stores normalised coefficients `c_k = x^{(k)}(t) / k!` for
//! `k < len`. Differentiation drops one order; composition with a scalar
//! function uses its analytic derivatives (Faa di Bruno up to third order).

use std::ops::{Add, Mul};

pub const MAX_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    coeffs: [f64; MAX_LEN],
    len: usize,
}

impl Jet {
    /// Jet from plain derivatives `[x, x', x'', ...]`.
    pub fn from_derivatives(derivs: &[f64]) -> Self {
        assert!(!derivs.is_empty() && derivs.len() <= MAX_LEN);
        let mut coeffs = [0.0; MAX_LEN];
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            coeffs[k] = d / fact;
        }
        Jet {
            coeffs,
            len: derivs.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeff(&self, k: usize) -> f64 {
        assert!(k < self.len);
        self.coeffs[k]
    }

    /// `k`-th time derivative at the expansion point.
    pub fn derivative_at(&self, k: usize) -> f64 {
        (1..=k).fold(self.coeff(k), |acc, i| acc * i as f64)
    }

    pub fn truncate(mut self, len: usize) -> Self {
        assert!(len >= 1 && len <= self.len);
        for c in &mut self.coeffs[len..] {
            *c = 0.0;
        }
        self.len = len;
        self
    }

    /// Time derivative; one order shorter.
    pub fn differentiate(&self) -> Self {
        assert!(self.len >= 2, "cannot differentiate a constant jet");
        let mut coeffs = [0.0; MAX_LEN];
        for k in 0..self.len - 1 {
            coeffs[k] = (k + 1) as f64 * self.coeffs[k + 1];
        }
        Jet {
            coeffs,
            len: self.len - 1,
        }
    }

    /// `g(self)` given `[g, g', g'', g''']` evaluated at `self.value()`.
    pub fn compose(&self, d: [f64; 4]) -> Self {
        assert!(self.len <= 4, "composition implemented up to third order");
        let a = &self.coeffs;
        let mut coeffs = [0.0; MAX_LEN];
        coeffs[0] = d[0];
        if self.len > 1 {
            coeffs[1] = d[1] * a[1];
        }
        if self.len > 2 {
            coeffs[2] = d[1] * a[2] + 0.5 * d[2] * a[1] * a[1];
        }
        if self.len > 3 {
            coeffs[3] = d[1] * a[3] + d[2] * a[1] * a[2] + d[3] * a[1].powi(3) / 6.0;
        }
        Jet {
            coeffs,
            len: self.len,
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let len = self.len.min(rhs.len);
        let mut coeffs = [0.0; MAX_LEN];
        for (k, c) in coeffs.iter_mut().enumerate().take(len) {
            *c = self.coeffs[k] + rhs.coeffs[k];
        }
        Jet { coeffs, len }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = rhs;
        for c in &mut out.coeffs[..rhs.len] {
            *c *= self;
        }
        out
    }
}
