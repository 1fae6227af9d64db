//! Scalar abstraction: every numerical routine in the crate is generic
//! over [`Scalar`], instantiated at `f64` (fast) or [`Rational`] (exact).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Arbitrary-precision rational scalar.
pub type Rational = BigRational;

/// The scalar field the library computes over.
pub trait Scalar:
    Clone
    + PartialEq
    + Debug
    + Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(n: i64) -> Self;
    /// The fraction `num/den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Exact conversion from a rational (rounds for `f64`).
    fn from_rational(q: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    /// Exact value as a rational (for `f64`, the exact binary value).
    fn to_rational(&self) -> Rational;
    /// Scalar closest to the given float (exact for the float backend).
    fn from_f64(x: f64) -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn recip(&self) -> Self;

    fn powi(&self, n: usize) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc *= base.clone();
            }
            base = base.clone() * base.clone();
            k >>= 1;
        }
        acc
    }

    /// Magnitude comparison used for pivoting; exactness is irrelevant here.
    fn mag(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_rational(q: &Rational) -> Self {
        rational_to_f64(q)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_rational(&self) -> Rational {
        Rational::from_float(*self).unwrap_or_else(|| Rational::from_integer(BigInt::from(0)))
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Rational as Zero>::zero()
    }
    fn one() -> Self {
        <Rational as num_traits::One>::one()
    }
    fn from_i64(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn to_rational(&self) -> Rational {
        self.clone()
    }
    fn from_f64(x: f64) -> Self {
        Rational::from_float(x).unwrap_or_else(|| Rational::from_integer(BigInt::from(0)))
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn recip(&self) -> Self {
        Rational::new(self.denom().clone(), self.numer().clone())
    }
}

/// Rational to f64, robust to magnitudes far outside the f64 range.
pub fn rational_to_f64(q: &Rational) -> f64 {
    if let Some(x) = ToPrimitive::to_f64(q) {
        if x.is_finite() {
            return x;
        }
    }
    // Fall back on a bit-length scaled estimate.
    let num = q.numer();
    let den = q.denom();
    if num.is_zero() {
        return 0.0;
    }
    let shift = (num.bits() as i64 - den.bits() as i64).clamp(-2000, 2000);
    let scaled = if shift > 0 {
        Rational::new(num.clone(), den.clone() << (shift as usize))
    } else {
        Rational::new(num.clone() << ((-shift) as usize), den.clone())
    };
    let base = ToPrimitive::to_f64(&scaled).unwrap_or(f64::NAN);
    base * 2f64.powi(shift as i32)
}

/// Parse a scalar written either as a decimal float or a `p/q` fraction.
///
/// Rational mode accepts integers and `p/q`; plain decimals are rejected
/// there so silent binary rounding never leaks into exact computations.
pub fn parse_scalar<S: Scalar>(text: &str) -> crate::Result<S> {
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let n: i64 = num
            .trim()
            .parse()
            .map_err(|_| crate::Error::Parse(format!("bad fraction numerator in {t:?}")))?;
        let d: i64 = den
            .trim()
            .parse()
            .map_err(|_| crate::Error::Parse(format!("bad fraction denominator in {t:?}")))?;
        if d == 0 {
            return Err(crate::Error::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(S::from_ratio(n, d));
    }
    if let Ok(n) = t.parse::<i64>() {
        return Ok(S::from_i64(n));
    }
    if S::EXACT {
        return Err(crate::Error::RationalUnsupported(format!(
            "{t:?} is not an integer or p/q fraction"
        )));
    }
    let x: f64 = t
        .parse()
        .map_err(|_| crate::Error::Parse(format!("bad number {t:?}")))?;
    if !x.is_finite() {
        return Err(crate::Error::Parse(format!("non-finite number {t:?}")));
    }
    // Only reachable for S = f64; the conversion round-trips exactly.
    Ok(S::from_rational(
        &Rational::from_float(x).unwrap_or_else(|| Rational::from_integer(0.into())),
    ))
}
