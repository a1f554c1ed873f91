//! Exact integer and rational arithmetic.
//!
//! Every counting constant in this crate is a rational multiple of
//! `pi^-2`, so [`PiRational`] stores the rational coefficient exactly and
//! converts to floating point only on demand. Binomials follow the vanishing
//! convention: out-of-range arguments give zero, which the profile-count
//! formulas rely on.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub type BigRat = num_rational::BigRational;

/// Shorthand for a small rational.
pub fn rat(num: i64, den: i64) -> BigRat {
    BigRat::new(BigInt::from(num), BigInt::from(den))
}

/// Shorthand for an integer as a rational.
pub fn rat_int<T: Into<BigInt>>(n: T) -> BigRat {
    BigRat::from_integer(n.into())
}

/// Binomial coefficient `C(n, k)`, zero whenever `k < 0` or `k > n`.
pub fn binomial(n: u64, k: i64) -> BigInt {
    if k < 0 || k as u64 > n {
        return BigInt::zero();
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = BigInt::from(1);
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> BigInt {
    let mut acc = BigInt::from(1);
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    acc
}

/// Double factorial with `0!! = 1` and `(-1)!! = 1`.
pub fn double_factorial(n: i64) -> BigInt {
    assert!(n >= -1, "double_factorial defined for n >= -1");
    let mut acc = BigInt::from(1);
    let mut i = n;
    while i >= 2 {
        acc *= BigInt::from(i);
        i -= 2;
    }
    acc
}

/// `4^m (m!)^2 / (2m)!`, the hypergeometric tail shared by all closed forms.
pub fn hyper_tail(m: u32) -> BigRat {
    let m = m as u64;
    let num = BigInt::from(4).pow(m as u32) * factorial(m) * factorial(m);
    BigRat::new(num, factorial(2 * m))
}

/// A value of the form `coeff / pi^2`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PiRational {
    pub coeff: BigRat,
}

impl PiRational {
    pub fn new(coeff: BigRat) -> Self {
        PiRational { coeff }
    }

    pub fn zero() -> Self {
        PiRational { coeff: BigRat::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    /// Floating-point value `coeff / pi^2`.
    pub fn eval(&self) -> f64 {
        let c = self.coeff.to_f64().unwrap_or_else(|| {
            let n = self.coeff.numer().to_f64().unwrap_or(f64::NAN);
            let d = self.coeff.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        });
        c / (std::f64::consts::PI * std::f64::consts::PI)
    }
}

/// Free-function form of [`PiRational::eval`].
pub fn pirational_eval(x: &PiRational) -> f64 {
    x.eval()
}

impl fmt::Display for PiRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} /pi^2", self.coeff)
    }
}

impl Add for PiRational {
    type Output = PiRational;
    fn add(self, rhs: PiRational) -> PiRational {
        PiRational::new(self.coeff + rhs.coeff)
    }
}

impl Sub for PiRational {
    type Output = PiRational;
    fn sub(self, rhs: PiRational) -> PiRational {
        PiRational::new(self.coeff - rhs.coeff)
    }
}

impl Neg for PiRational {
    type Output = PiRational;
    fn neg(self) -> PiRational {
        PiRational::new(-self.coeff)
    }
}

impl Mul<BigRat> for PiRational {
    type Output = PiRational;
    fn mul(self, rhs: BigRat) -> PiRational {
        PiRational::new(self.coeff * rhs)
    }
}

impl Div<BigRat> for PiRational {
    type Output = PiRational;
    fn div(self, rhs: BigRat) -> PiRational {
        assert!(!rhs.is_zero());
        PiRational::new(self.coeff / rhs)
    }
}

/// Parse `"30"`, `"3/2"` or `"0.25"` as an exact rational.
pub fn parse_rat(s: &str) -> Option<BigRat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" { BigInt::zero() } else { int.parse().ok()? };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_int: BigInt = frac.parse().ok()?;
        let magnitude = int.abs() * &scale + frac_int;
        let signed = if neg { -magnitude } else { magnitude };
        return Some(BigRat::new(signed, scale));
    }
    let n: BigInt = s.parse().ok()?;
    Some(BigRat::from_integer(n))
}

/// Render a rational as a decimal with enough digits for reports.
pub fn rat_to_f64(r: &BigRat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}
