//! Double-double arithmetic.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, giving
//! roughly 106 bits (about 31 decimal digits) of significand. The kernels are
//! the classic error-free transformations (Knuth two-sum, FMA two-prod).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    let e = b - (s - a);
    DoubleDouble { hi: s, lo: e }
}

#[inline]
fn two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    DoubleDouble { hi: s, lo: e }
}

#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> DoubleDouble {
    let p = a * b;
    let e = a.mul_add(b, -p);
    DoubleDouble { hi: p, lo: e }
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn new(hi: f64, lo: f64) -> Self {
        quick_two_sum(hi, lo)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn recip(self) -> Self {
        Self::ONE / self
    }

    /// Square root by one Newton correction of the f64 estimate.
    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::ZERO
            } else {
                Self::from_f64(f64::NAN)
            };
        }
        let x = self.hi.sqrt();
        let r = self - two_prod(x, x);
        x_plus(x, r.hi / (2.0 * x))
    }

    pub fn powi(self, n: u32) -> Self {
        let mut result = Self::ONE;
        let mut base = self;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result *= base;
            }
            base *= base;
            e >>= 1;
        }
        result
    }

    /// Nearest double-double to an exact rational.
    pub fn from_rational(q: &BigRational) -> Self {
        if q.is_zero() {
            return Self::ZERO;
        }
        let hi = ratio_to_f64(q);
        let rest = q - BigRational::from_float(hi).expect("finite");
        let lo = ratio_to_f64(&rest);
        Self::new(hi, lo)
    }
}

fn x_plus(x: f64, y: f64) -> DoubleDouble {
    quick_two_sum(x, y)
}

/// Correctly scaled conversion of a big rational to f64 (the generic
/// `to_f64` overflows when numerator and denominator are both huge).
fn ratio_to_f64(q: &BigRational) -> f64 {
    if q.is_zero() {
        return 0.0;
    }
    let neg = q.is_negative();
    let q = q.abs();
    let n_bits = q.numer().bits() as i64;
    let d_bits = q.denom().bits() as i64;
    // scale so that the integer quotient has ~120 bits
    let shift = 120 - (n_bits - d_bits);
    let (num, den) = if shift >= 0 {
        (q.numer() << (shift as usize), q.denom().clone())
    } else {
        (q.numer().clone(), q.denom() << ((-shift) as usize))
    };
    let quotient: BigInt = num / den;
    let mant = quotient.to_f64().unwrap_or(f64::INFINITY);
    let v = mant * 2f64.powi(-(shift as i32));
    if neg {
        -v
    } else {
        v
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.to_f64())
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let s = two_sum(self.hi, b.hi);
        let t = two_sum(self.lo, b.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Add<f64> for DoubleDouble {
    type Output = Self;
    fn add(self, b: f64) -> Self {
        let s = two_sum(self.hi, b);
        quick_two_sum(s.hi, s.lo + self.lo)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let p = two_prod(self.hi, b.hi);
        let lo = p.lo + (self.hi * b.lo + self.lo * b.hi);
        quick_two_sum(p.hi, lo)
    }
}

impl Mul<f64> for DoubleDouble {
    type Output = Self;
    fn mul(self, b: f64) -> Self {
        let p = two_prod(self.hi, b);
        quick_two_sum(p.hi, p.lo + self.lo * b)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        quick_two_sum(q1, q2) + q3
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl SubAssign for DoubleDouble {
    fn sub_assign(&mut self, b: Self) {
        *self = *self - b;
    }
}

impl MulAssign for DoubleDouble {
    fn mul_assign(&mut self, b: Self) {
        *self = *self * b;
    }
}

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

/// Scalar field used by the dense kernels so that the same code runs in f64
/// and in double-double.
pub trait Real:
    Copy
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    /// Unit roundoff of the representation.
    fn epsilon() -> f64;
}

impl Real for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn epsilon() -> f64 {
        f64::EPSILON
    }
}

impl Real for DoubleDouble {
    fn zero() -> Self {
        Self::ZERO
    }
    fn one() -> Self {
        Self::ONE
    }
    fn from_f64(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    fn epsilon() -> f64 {
        // 2^-104
        4.930380657631324e-32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn dd_err(x: DoubleDouble, q: &BigRational) -> f64 {
        let exact = q.clone();
        let approx = BigRational::from_float(x.hi).unwrap() + BigRational::from_float(x.lo).unwrap();
        let diff = (approx - &exact).abs() / exact.abs();
        ratio_to_f64(&diff)
    }

    #[test]
    fn one_third_carries_extra_digits() {
        let third = DoubleDouble::ONE / DoubleDouble::from_f64(3.0);
        assert!(dd_err(third, &rat(1, 3)) < 1e-31);
        let back = third * 3.0;
        assert!((back - DoubleDouble::ONE).abs().hi < 1e-31);
    }

    #[test]
    fn sqrt_two_squared() {
        let r = DoubleDouble::from_f64(2.0).sqrt();
        let e = r * r - DoubleDouble::from_f64(2.0);
        assert!(e.abs().hi < 1e-30);
    }

    #[test]
    fn rational_conversion_is_accurate() {
        let q = rat(22, 7) * rat(1, 1_000_000_007);
        assert!(dd_err(DoubleDouble::from_rational(&q), &q) < 1e-31);
        let neg = -rat(5, 48);
        assert!(dd_err(DoubleDouble::from_rational(&neg), &neg) < 1e-31);
    }

    #[test]
    fn huge_rational_parts_do_not_overflow() {
        let big = BigInt::from(10).pow(400);
        let q = BigRational::new(big.clone() * 3, big * 7);
        assert!(dd_err(DoubleDouble::from_rational(&q), &rat(3, 7)) < 1e-31);
    }

    #[test]
    fn powi_matches_repeated_product() {
        let x = DoubleDouble::from_f64(0.2) / DoubleDouble::from_f64(3.0);
        let mut p = DoubleDouble::ONE;
        for _ in 0..9 {
            p *= x;
        }
        assert!(((x.powi(9) - p) / p).abs().hi < 1e-30);
    }
}
