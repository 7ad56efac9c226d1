//! Scalar abstraction shared by the jet arithmetic, the weight-sequence
//! machinery and the extended-precision certificates.
//!
//! [`Real`] is implemented for `f32`, `f64` and [`Ext`], a multi-precision
//! binary float whose mantissa width is a per-thread setting (default 256
//! bits, overridable with the `DCJORIS_PREC_BITS` environment variable).

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

/// Environment variable overriding the default mantissa width of [`Ext`].
pub const PRECISION_ENV: &str = "DCJORIS_PREC_BITS";

/// Default mantissa width of [`Ext`] in bits.
pub const DEFAULT_PRECISION: usize = 256;

pub trait Real:
    Clone
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn from_i64(n: i64) -> Self {
        Self::from_f64(n as f64)
    }

    fn is_zero(&self) -> bool {
        self.to_f64() == 0.0 && *self == Self::zero()
    }

    /// `self^p` for `self > 0`.
    fn powf(&self, p: &Self) -> Self {
        (p.clone() * self.ln()).exp()
    }
}

macro_rules! impl_real_prim {
    ($t:ty) => {
        impl Real for $t {
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(&self) -> f64 {
                *self as f64
            }
            fn ln(&self) -> Self {
                <$t>::ln(*self)
            }
            fn exp(&self) -> Self {
                <$t>::exp(*self)
            }
            fn sqrt(&self) -> Self {
                <$t>::sqrt(*self)
            }
            fn abs(&self) -> Self {
                <$t>::abs(*self)
            }
            fn powi(&self, n: i32) -> Self {
                <$t>::powi(*self, n)
            }
            fn sin(&self) -> Self {
                <$t>::sin(*self)
            }
            fn cos(&self) -> Self {
                <$t>::cos(*self)
            }
            fn is_zero(&self) -> bool {
                *self == 0.0
            }
            fn powf(&self, p: &Self) -> Self {
                <$t>::powf(*self, *p)
            }
        }
    };
}

impl_real_prim!(f32);
impl_real_prim!(f64);

thread_local! {
    static PRECISION: Cell<usize> = Cell::new(initial_precision());
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants cache"));
}

fn initial_precision() -> usize {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&p| p >= 64)
        .unwrap_or(DEFAULT_PRECISION)
}

/// Current mantissa width of [`Ext`] on this thread.
pub fn precision() -> usize {
    PRECISION.with(|p| p.get())
}

/// Sets the mantissa width of [`Ext`] on this thread.
pub fn set_precision(bits: usize) {
    PRECISION.with(|p| p.set(bits.max(64)));
}

/// Runs `f` with a temporary mantissa width, restoring the previous one.
pub fn with_precision<R>(bits: usize, f: impl FnOnce() -> R) -> R {
    struct Restore(usize);
    impl Drop for Restore {
        fn drop(&mut self) {
            set_precision(self.0);
        }
    }
    let _restore = Restore(precision());
    set_precision(bits);
    f()
}

const RM: RoundingMode = RoundingMode::ToEven;

/// Multi-precision binary float.
#[derive(Clone)]
pub struct Ext(BigFloat);

impl Ext {
    pub fn new(x: f64) -> Self {
        Ext(BigFloat::from_f64(x, precision()))
    }

    pub fn from_u64(n: u64) -> Self {
        Ext(BigFloat::from_u64(n, precision()))
    }

    pub fn inner(&self) -> &BigFloat {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn max(&self, other: &Ext) -> Ext {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    pub fn min(&self, other: &Ext) -> Ext {
        if self <= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// `n!` computed exactly up to the working precision.
    pub fn factorial(n: u64) -> Ext {
        let p = precision();
        let mut acc = BigFloat::from_u64(1, p);
        for k in 2..=n {
            acc = acc.mul(&BigFloat::from_u64(k, p), p, RM);
        }
        Ext(acc)
    }

    /// Decimal rendering with the full working precision.
    pub fn to_decimal(&self) -> String {
        CONSTS.with(|cc| {
            self.0
                .format(astro_float::Radix::Dec, RM, &mut cc.borrow_mut())
                .unwrap_or_else(|_| "NaN".to_string())
        })
    }
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

impl Real for Ext {
    fn from_f64(x: f64) -> Self {
        Ext::new(x)
    }

    fn from_i64(n: i64) -> Self {
        Ext(BigFloat::from_i64(n, precision()))
    }

    fn to_f64(&self) -> f64 {
        if self.0.is_nan() {
            return f64::NAN;
        }
        if self.0.is_inf_pos() {
            return f64::INFINITY;
        }
        if self.0.is_inf_neg() {
            return f64::NEG_INFINITY;
        }
        if self.0.is_zero() {
            return 0.0;
        }
        let (m, _n, s, e, _) = self.0.as_raw_parts().expect("finite value");
        // value = 0.m * 2^e with the most significant word last
        let top = m[m.len() - 1] as f64;
        let next = if m.len() > 1 {
            m[m.len() - 2] as f64 / 18446744073709551616.0
        } else {
            0.0
        };
        let v = ldexp(top + next, e as i64 - 64);
        if s == Sign::Neg {
            -v
        } else {
            v
        }
    }

    fn ln(&self) -> Self {
        CONSTS.with(|cc| Ext(self.0.ln(precision(), RM, &mut cc.borrow_mut())))
    }

    fn exp(&self) -> Self {
        CONSTS.with(|cc| Ext(self.0.exp(precision(), RM, &mut cc.borrow_mut())))
    }

    fn sqrt(&self) -> Self {
        Ext(self.0.sqrt(precision(), RM))
    }

    fn abs(&self) -> Self {
        Ext(self.0.abs())
    }

    fn powi(&self, n: i32) -> Self {
        let p = precision();
        let r = self.0.powi(n.unsigned_abs() as usize, p, RM);
        if n < 0 {
            Ext(r.reciprocal(p, RM))
        } else {
            Ext(r)
        }
    }

    fn sin(&self) -> Self {
        CONSTS.with(|cc| Ext(self.0.sin(precision(), RM, &mut cc.borrow_mut())))
    }

    fn cos(&self) -> Self {
        CONSTS.with(|cc| Ext(self.0.cos(precision(), RM, &mut cc.borrow_mut())))
    }

    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ext({:e})", self.to_f64())
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal())
    }
}

impl PartialEq for Ext {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

macro_rules! ext_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Ext {
            type Output = Ext;
            fn $method(self, rhs: Ext) -> Ext {
                Ext(self.0.$method(&rhs.0, precision(), RM))
            }
        }
        impl<'a> $trait<&'a Ext> for &'a Ext {
            type Output = Ext;
            fn $method(self, rhs: &'a Ext) -> Ext {
                Ext(self.0.$method(&rhs.0, precision(), RM))
            }
        }
    };
}

ext_binop!(Add, add);
ext_binop!(Sub, sub);
ext_binop!(Mul, mul);
ext_binop!(Div, div);

impl Neg for Ext {
    type Output = Ext;
    fn neg(self) -> Ext {
        Ext(self.0.neg())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip() {
        for &x in &[1.0, -2.5, 1e-300, 3.0e300, std::f64::consts::PI, 0.1] {
            assert_eq!(Ext::new(x).to_f64(), x);
        }
    }

    #[test]
    fn ln_exp_agree_at_high_precision() {
        with_precision(512, || {
            let two = Ext::new(2.0);
            let back = two.ln().exp();
            let err = (back - two).abs().to_f64();
            assert!(err < 1e-140, "{err}");
        });
    }

    #[test]
    fn factorial_is_exact_for_small_n() {
        assert_eq!(Ext::factorial(20).to_f64(), 2432902008176640000.0);
    }

    #[test]
    fn negative_powers() {
        let x = Ext::new(4.0).powi(-2);
        assert_eq!(x.to_f64(), 0.0625);
    }
}
