//! Truncated Taylor series ("jets") with the usual power-series recurrences.
//!
//! A jet of order `n` at `x0` stores the normalized Taylor coefficients
//! `a_k = f^(k)(x0) / k!` for `k <= n`. Working with normalized coefficients
//! keeps products and compositions well scaled; `derivative` undoes the
//! normalization.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T> {
    coeffs: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn from_coeffs(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Jet { coeffs }
    }

    pub fn constant(c: T, order: usize) -> Self {
        let mut coeffs = vec![T::zero(); order + 1];
        coeffs[0] = c;
        Jet { coeffs }
    }

    /// The identity function `x` expanded at `x0`.
    pub fn variable(x0: T, order: usize) -> Self {
        let mut j = Self::constant(x0, order);
        if order >= 1 {
            j.coeffs[1] = T::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn value(&self) -> &T {
        &self.coeffs[0]
    }

    /// `f^(k)(x0)`.
    pub fn derivative(&self, k: usize) -> T {
        let mut fact = T::one();
        for i in 2..=k {
            fact = fact * T::from_i64(i as i64);
        }
        self.coeffs[k].clone() * fact
    }

    pub fn derivatives(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        let mut fact = T::one();
        for (k, c) in self.coeffs.iter().enumerate() {
            if k >= 2 {
                fact = fact * T::from_i64(k as i64);
            }
            out.push(c.clone() * fact.clone());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        Jet {
            coeffs: (0..=n)
                .map(|k| self.coeffs[k].clone() + other.coeffs[k].clone())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-T::one()))
    }

    pub fn scale(&self, c: &T) -> Self {
        Jet {
            coeffs: self.coeffs.iter().map(|a| a.clone() * c.clone()).collect(),
        }
    }

    pub fn add_scalar(&self, c: &T) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].clone() + c.clone();
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        let coeffs = (0..=n)
            .map(|k| {
                (0..=k).fold(T::zero(), |acc, i| {
                    acc + self.coeffs[i].clone() * other.coeffs[k - i].clone()
                })
            })
            .collect();
        Jet { coeffs }
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut acc = Jet::constant(T::one(), self.order());
        let mut base = self.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// `1/f`; requires `f(x0) != 0`.
    pub fn recip(&self) -> Self {
        let a0 = self.coeffs[0].clone();
        let n = self.order();
        let mut b: Vec<T> = Vec::with_capacity(n + 1);
        b.push(T::one() / a0.clone());
        for k in 1..=n {
            let s = (1..=k).fold(T::zero(), |acc, i| {
                acc + self.coeffs[i].clone() * b[k - i].clone()
            });
            b.push(-s / a0.clone());
        }
        Jet { coeffs: b }
    }

    pub fn div(&self, other: &Self) -> Self {
        self.mul(&other.recip())
    }

    /// `exp(f)` via `E' = f' E`.
    pub fn exp(&self) -> Self {
        let n = self.order();
        let mut e: Vec<T> = Vec::with_capacity(n + 1);
        e.push(self.coeffs[0].exp());
        for k in 1..=n {
            let s = (1..=k).fold(T::zero(), |acc, i| {
                acc + T::from_i64(i as i64) * self.coeffs[i].clone() * e[k - i].clone()
            });
            e.push(s / T::from_i64(k as i64));
        }
        Jet { coeffs: e }
    }

    /// `ln(f)`; requires `f(x0) > 0`.
    pub fn ln(&self) -> Self {
        let n = self.order();
        let a0 = self.coeffs[0].clone();
        let mut l: Vec<T> = Vec::with_capacity(n + 1);
        l.push(a0.ln());
        for k in 1..=n {
            let s = (1..k).fold(T::zero(), |acc, i| {
                acc + T::from_i64(i as i64) * l[i].clone() * self.coeffs[k - i].clone()
            });
            let lk = (self.coeffs[k].clone() - s / T::from_i64(k as i64)) / a0.clone();
            l.push(lk);
        }
        Jet { coeffs: l }
    }

    /// `f^p` for real `p`; requires `f(x0) > 0`.
    pub fn powf(&self, p: &T) -> Self {
        let n = self.order();
        let a0 = self.coeffs[0].clone();
        let mut q: Vec<T> = Vec::with_capacity(n + 1);
        q.push(a0.powf(p));
        for k in 1..=n {
            let s = (1..=k).fold(T::zero(), |acc, i| {
                let w = p.clone() * T::from_i64(i as i64) - T::from_i64((k - i) as i64);
                acc + w * self.coeffs[i].clone() * q[k - i].clone()
            });
            q.push(s / (T::from_i64(k as i64) * a0.clone()));
        }
        Jet { coeffs: q }
    }

    /// `(sin f, cos f)` via `S' = f' C`, `C' = -f' S`.
    pub fn sin_cos(&self) -> (Self, Self) {
        let n = self.order();
        let mut s: Vec<T> = Vec::with_capacity(n + 1);
        let mut c: Vec<T> = Vec::with_capacity(n + 1);
        s.push(self.coeffs[0].sin());
        c.push(self.coeffs[0].cos());
        for k in 1..=n {
            let (mut ss, mut cc) = (T::zero(), T::zero());
            for i in 1..=k {
                let w = T::from_i64(i as i64) * self.coeffs[i].clone();
                ss = ss + w.clone() * c[k - i].clone();
                cc = cc - w * s[k - i].clone();
            }
            let kk = T::from_i64(k as i64);
            s.push(ss / kk.clone());
            c.push(cc / kk);
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    /// Sum of the series at offset `dx` from the expansion point.
    pub fn eval_offset(&self, dx: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * dx.clone() + c.clone())
    }
}

impl Jet<f64> {
    pub fn to_ext(&self) -> Jet<crate::scalar::Ext> {
        Jet {
            coeffs: self
                .coeffs
                .iter()
                .map(|&c| crate::scalar::Ext::new(c))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_variable_matches_taylor() {
        let j = Jet::variable(0.3f64, 8).exp();
        for k in 0..=8 {
            assert_relative_eq!(j.derivative(k), 0.3f64.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn recip_of_one_minus_half_x() {
        // 1/(1 - x/2) at 0: a_k = 2^-k
        let one = Jet::constant(1.0f64, 10);
        let d = one.sub(&Jet::variable(0.0, 10).scale(&0.5));
        let r = d.recip();
        for k in 0..=10 {
            assert_relative_eq!(r.coeffs()[k], 0.5f64.powi(k as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn ln_inverts_exp() {
        let x = Jet::variable(0.7f64, 12).powi(2).add_scalar(&0.25);
        let back = x.ln().exp();
        for k in 0..=12 {
            assert_relative_eq!(back.coeffs()[k], x.coeffs()[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn powf_half_squares_back() {
        let x = Jet::variable(1.3f64, 10).add_scalar(&0.5);
        let s = x.powf(&0.5);
        let sq = s.mul(&s);
        for k in 0..=10 {
            assert_relative_eq!(sq.coeffs()[k], x.coeffs()[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn sin_cos_derivatives_cycle() {
        let (s, c) = Jet::variable(0.9f64, 9).sin_cos();
        let expect = [0.9f64.sin(), 0.9f64.cos(), -0.9f64.sin(), -0.9f64.cos()];
        for k in 0..=9 {
            assert_relative_eq!(s.derivative(k), expect[k % 4], epsilon = 1e-12);
            assert_relative_eq!(c.derivative(k), expect[(k + 1) % 4], epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_minus_inverse_matches_closed_form() {
        // d/dx exp(-1/x) = exp(-1/x)/x^2
        let x0 = 0.4f64;
        let j = Jet::variable(x0, 3).recip().scale(&-1.0).exp();
        assert_relative_eq!(j.derivative(1), (-1.0 / x0).exp() / (x0 * x0), max_relative = 1e-13);
        // f'' = e^{-1/x}(x^-4 - 2 x^-3)
        let f2 = (-1.0 / x0).exp() * (x0.powi(-4) - 2.0 * x0.powi(-3));
        assert_relative_eq!(j.derivative(2), f2, max_relative = 1e-12);
    }
}
