//! Hypergeometric binomial sums, evaluated both by brute force and through
//! their closed forms, with exact equality as the only acceptance notion.
//!
//! The central quantity is
//! `B(m,s) = sum_{q=1}^{m-1} C(m,q) C(m-1,q+s) / C(2m,2q)`,
//! which the dumbbell counting reduces to. It is verified against closed
//! forms for `s in {0,1,2}` via the auxiliary sums `D(m,s,j)`, `X(m,i)` and
//! the falling-factorial polynomial `P^(m,s)`.

use crate::exactmath::{binomial, hyper_tail, rat, rat_int, BigRat};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityReport {
    pub m: u32,
    pub s: u32,
    pub direct: BigRat,
    pub closed: BigRat,
    pub equal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdentityError {
    /// No closed form is implemented for this `s`.
    UnsupportedS(u32),
}

impl fmt::Display for IdentityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityError::UnsupportedS(s) => {
                write!(f, "no closed form for s = {s}; only s in {{0,1,2}}")
            }
        }
    }
}

impl std::error::Error for IdentityError {}

/// `D(m,s,j) = sum_{q=0}^m C(2q,q) C(2m-2q,m-q) q!/(q+s)! q^j`, exactly.
pub fn d_direct(m: u32, s: u32, j: u32) -> BigRat {
    let mut acc = BigRat::zero();
    for q in 0..=m as u64 {
        let core = binomial(2 * q, q as i64) * binomial(2 * (m as u64 - q), (m as u64 - q) as i64);
        // q!/(q+s)! = 1 / ((q+1)...(q+s))
        let mut den = BigInt::one();
        for t in q + 1..=q + s as u64 {
            den *= BigInt::from(t);
        }
        let qj = BigInt::from(q).pow(j);
        acc += BigRat::new(core * qj, den);
    }
    acc
}

/// Check `D(m,s,j) = D(m,s-1,j-1) - s D(m,s,j-1)` for all `1 <= s <= s_max`,
/// `1 <= j <= j_max`.
pub fn d_recurrence_check(m: u32, s_max: u32, j_max: u32) -> bool {
    for s in 1..=s_max {
        for j in 1..=j_max {
            let lhs = d_direct(m, s, j);
            let rhs = d_direct(m, s - 1, j - 1) - rat_int(s) * d_direct(m, s, j - 1);
            if lhs != rhs {
                return false;
            }
        }
    }
    true
}

/// `X(m,i) = sum_q C(2q,q) C(2m-2q,m-q) i/(q+i)` by direct summation.
pub fn x_direct(m: u32, i: u32) -> BigRat {
    assert!(i >= 1);
    let mut acc = BigRat::zero();
    for q in 0..=m as u64 {
        let core = binomial(2 * q, q as i64) * binomial(2 * (m as u64 - q), (m as u64 - q) as i64);
        acc += BigRat::new(core * BigInt::from(i), BigInt::from(q + i as u64));
    }
    acc
}

/// Closed form `X(m,i) = C(2m+2i-1, m+i) / C(2i-1, i)`.
pub fn x_closed(m: u32, i: u32) -> BigRat {
    assert!(i >= 1);
    let m = m as u64;
    let i = i as u64;
    BigRat::new(
        binomial(2 * m + 2 * i - 1, (m + i) as i64),
        binomial(2 * i - 1, i as i64),
    )
}

/// Coefficients `p_0..p_{s+1}` of the degree-`(s+1)` polynomial
/// `prod_{i=0..s} (m - q - i)` in the variable `q`.
pub fn p_coefficients(m: u32, s: u32) -> Vec<BigRat> {
    let mut poly = vec![BigRat::one()];
    for i in 0..=s as i64 {
        // multiply by (m - i) - q
        let c = rat_int(m as i64 - i);
        let mut next = vec![BigRat::zero(); poly.len() + 1];
        for (d, coeff) in poly.iter().enumerate() {
            next[d] += coeff * &c;
            next[d + 1] -= coeff;
        }
        poly = next;
    }
    poly
}

/// `A(m,s) = sum_j p_j^{(m,s)} D(m,s,j)`.
pub fn a_direct(m: u32, s: u32) -> BigRat {
    p_coefficients(m, s)
        .iter()
        .enumerate()
        .map(|(j, p)| p * d_direct(m, s, j as u32))
        .sum()
}

/// `B(m,s)` as a literal finite sum; empty (zero) for `m = 1`.
pub fn b_direct(m: u32, s: u32) -> BigRat {
    assert!(m >= 1);
    let mu = m as u64;
    let mut acc = BigRat::zero();
    for q in 1..mu {
        let num = binomial(mu, q as i64) * binomial(mu - 1, (q + s as u64) as i64);
        let den = binomial(2 * mu, 2 * q as i64);
        acc += BigRat::new(num, den);
    }
    acc
}

/// Closed forms of `B(m,s)` for `s in {0,1,2}`.
pub fn b_closed(m: u32, s: u32) -> Result<BigRat, IdentityError> {
    assert!(m >= 1);
    let t = hyper_tail(m);
    let mr = rat_int(m);
    match s {
        0 => Ok(rat(1, 2) * t - rat_int(1)),
        1 => Ok(mr + rat_int(2) - rat(3, 2) * t),
        2 => Ok(rat(1, 6) * &mr * &mr - rat(13, 6) * mr - rat_int(3) + rat(5, 2) * t),
        other => Err(IdentityError::UnsupportedS(other)),
    }
}

/// Evaluate every `(m, s)` pair with `m <= m_max`, `s in {0,1,2}` both ways.
pub fn verify_identities(m_max: u32) -> Vec<IdentityReport> {
    assert!(m_max >= 1);
    let mut reports = Vec::with_capacity(3 * m_max as usize);
    for m in 1..=m_max {
        for s in 0..=2 {
            let direct = b_direct(m, s);
            let closed = b_closed(m, s).expect("s <= 2");
            let equal = direct == closed;
            reports.push(IdentityReport { m, s, direct, closed, equal });
        }
    }
    reports
}
