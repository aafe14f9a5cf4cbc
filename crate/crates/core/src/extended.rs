//! Double-double arithmetic (about 32 significant digits) for the
//! finite-difference oracle.
//!
//! A central difference with step `1e-6` divides evaluation noise by `2e-6`;
//! in plain `f64` that leaves ~1e-10 of noise on every numeric derivative,
//! which swamps coordinates whose true derivative is zero. Evaluating the
//! objective in double-double pushes that floor below 1e-20.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the reference forward pass is generic over.
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn new(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }

    fn from_parts(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        DoubleDouble { hi, lo }
    }

    /// Exact multiplication by a power of two.
    fn ldexp(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        DoubleDouble {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        DoubleDouble::from_parts(s, e + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        DoubleDouble::from_parts(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::new(q2);
        let q3 = r.hi / o.hi;
        DoubleDouble::from_parts(q1, q2) + DoubleDouble::new(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            other => other,
        }
    }
}

impl Real for DoubleDouble {
    fn from_f64(v: f64) -> Self {
        DoubleDouble::new(v)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return DoubleDouble::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DoubleDouble::new(0.0);
        }
        // x = k ln2 + r, then exp(r) = (exp(r / 1024))^1024
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * DoubleDouble::new(k)).ldexp(-10);
        let mut term = DoubleDouble::new(1.0);
        let mut sum = DoubleDouble::new(1.0);
        for n in 1..=14 {
            term = term * r / DoubleDouble::new(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        // split the scaling so 2^k never overflows on its own
        let k = k as i32;
        sum.ldexp(k / 2).ldexp(k - k / 2)
    }

    fn ln(self) -> Self {
        // Newton on exp(y) = x
        let mut y = DoubleDouble::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DoubleDouble::new(1.0);
        }
        y
    }

    fn tanh(self) -> Self {
        let a = self.abs();
        if a.hi > 40.0 {
            return DoubleDouble::new(self.hi.signum());
        }
        let e = (-(a + a)).exp();
        let one = DoubleDouble::new(1.0);
        let t = (one - e) / (one + e);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}
