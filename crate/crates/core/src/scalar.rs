//! Scalar abstraction shared by the exact and floating code paths.
//!
//! Everything algebraic in this crate is written against [`Scalar`]. Exact
//! certification runs over [`Rational`], numerics over `f64` (or `f32`), and
//! first-order directional derivatives over [`Dual`].

use std::fmt::{self, Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};

/// Arbitrary precision rational numbers.
pub type Rational = BigRational;

pub trait Scalar:
    Clone + Debug + PartialEq + Num + Neg<Output = Self> + Send + Sync + 'static
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    fn from_i64(v: i64) -> Self;

    /// Exact conversion when the type allows it, nearest value otherwise.
    fn from_f64(v: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Size used for pivot selection and residual reporting.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }

    /// `e^self`, when the type can represent it.
    fn try_exp(&self) -> Option<Self>;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn from_rational(q: &Rational) -> Self {
        Self::from_f64(q.to_f64_lossy())
    }

    /// Integer power with negative exponents allowed.
    fn powi(&self, exp: i64) -> Self {
        let mut base = if exp < 0 {
            Self::one() / self.clone()
        } else {
            self.clone()
        };
        let mut e = exp.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            e >>= 1;
        }
        acc
    }
}

/// Floating point scalars: adds the transcendental functions the flows and
/// finite-difference checks need.
pub trait Real: Scalar + num_traits::Float {}

impl Real for f32 {}
impl Real for f64 {}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn try_exp(&self) -> Option<Self> {
        Some(self.exp())
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;
    fn from_i64(v: i64) -> Self {
        v as f32
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
    fn try_exp(&self) -> Option<Self> {
        Some(self.exp())
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_f64(v: f64) -> Self {
        rational_from_decimal(v)
    }
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
    fn to_f64(&self) -> f64 {
        self.to_f64_lossy()
    }
    fn magnitude(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.to_f64_lossy().abs().max(f64::MIN_POSITIVE)
        }
    }
    fn try_exp(&self) -> Option<Self> {
        if self.is_zero() {
            Some(Self::one())
        } else {
            None
        }
    }
}

trait LossyF64 {
    fn to_f64_lossy(&self) -> f64;
}

impl LossyF64 for Rational {
    fn to_f64_lossy(&self) -> f64 {
        match ToPrimitive::to_f64(self) {
            Some(v) => v,
            None => {
                let n = self.numer().to_f64().unwrap_or(f64::NAN);
                let d = self.denom().to_f64().unwrap_or(f64::NAN);
                n / d
            }
        }
    }
}

/// Reads a float through its shortest decimal representation, so that
/// `0.01` becomes exactly `1/100` rather than the nearest binary fraction.
pub fn rational_from_decimal(v: f64) -> Rational {
    if !v.is_finite() {
        return Rational::zero();
    }
    let text = format!("{v:e}");
    let (mantissa, exponent) = text.split_once('e').unwrap_or((&text, "0"));
    let exponent: i32 = exponent.parse().unwrap_or(0);
    let negative = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches('-');
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{int_part}{frac_part}").parse().unwrap_or_default();
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        Rational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        r = -r;
    }
    r
}

/// First-order dual number `re + eps * du` with `eps^2 = 0`.
///
/// Evaluating a group function at `G (1 + eps X)` yields its value in `re`
/// and the derivative along the right shift by `X` in `du`.
#[derive(Clone, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }
    pub fn constant(re: T) -> Self {
        Dual { re, du: T::zero() }
    }
}

impl<T: Debug> Debug for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}+{:?}e", self.re, self.du)
    }
}

impl<T: Display> Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}e", self.re, self.du)
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let du = self.re.clone() * o.du + self.du * o.re.clone();
        Dual::new(self.re * o.re, du)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let re = self.re.clone() / o.re.clone();
        let du = (self.du * o.re.clone() - self.re * o.du) / (o.re.clone() * o.re);
        Dual::new(re, du)
    }
}

impl<T: Scalar> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        Dual::constant(self.re % o.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<T: Scalar> Zero for Dual<T> {
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.du.is_zero()
    }
}

impl<T: Scalar> One for Dual<T> {
    fn one() -> Self {
        Dual::constant(T::one())
    }
}

impl<T: Scalar> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Dual::constant)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    const EXACT: bool = T::EXACT;
    fn from_i64(v: i64) -> Self {
        Dual::constant(T::from_i64(v))
    }
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn from_rational(q: &Rational) -> Self {
        Dual::constant(T::from_rational(q))
    }
    fn to_f64(&self) -> f64 {
        self.re.to_f64()
    }
    fn magnitude(&self) -> f64 {
        self.re.magnitude()
    }
    fn try_exp(&self) -> Option<Self> {
        let e = self.re.try_exp()?;
        Some(Dual::new(e.clone(), e * self.du.clone()))
    }
}
