//! Configuration counts, lifting multipliers and the assembled growth
//! constants.
//!
//! Everything here is computed along two independent routes and compared
//! exactly: once by enumerating configuration classes (profile counts times
//! lifting factors times the genus-zero constants) and once through the
//! closed forms. A disagreement is a bug in one of the routes, never a
//! tolerance issue, so it surfaces as [`SvError::InternalMismatch`].

use crate::exactmath::{
    binomial, double_factorial, factorial, hyper_tail, rat, rat_int, BigRat, PiRational,
};
use crate::identities::b_closed;
use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Ramified-pole counts `(r_h, r_v)` on the chosen side of a cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Profile {
    pub r_h: u8,
    pub r_v: u8,
}

impl Profile {
    pub fn new(r_h: u8, r_v: u8) -> Self {
        Profile { r_h, r_v }
    }

    /// Good profiles have both ramification counts in `{0, 1}`.
    pub fn is_good(self) -> bool {
        self.r_h <= 1 && self.r_v <= 1
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.r_h, self.r_v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigKind {
    Pocket,
    Dumbbell,
}

/// One combinatorial class of cylinder configurations together with how many
/// configurations the class contains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigClass {
    pub kind: ConfigKind,
    pub profile: Profile,
    /// Simple zeros on the first side; dumbbell classes only.
    pub q: Option<u32>,
    pub multiplicity_count: BigInt,
}

/// All exact constants attached to one obstacle class `m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantsBundle {
    pub m: u32,
    pub delta: BigRat,
    pub c_pocket_good: PiRational,
    pub c_dumbbell_good: PiRational,
    pub c_good: PiRational,
    pub c_main: PiRational,
    pub c_area_good: PiRational,
    pub c_area_main: PiRational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SvError {
    QOutOfRange { m: u32, q: u32 },
    NotGoodProfile(Profile),
    InternalMismatch(String),
}

impl fmt::Display for SvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SvError::QOutOfRange { m, q } => write!(f, "q = {q} outside 1..={} for m = {m}", m.saturating_sub(1)),
            SvError::NotGoodProfile(p) => write!(f, "profile {p} is not good (needs r_h, r_v <= 1)"),
            SvError::InternalMismatch(what) => write!(f, "independent computation paths disagree: {what}"),
        }
    }
}

impl std::error::Error for SvError {}

/// Diffusion rate `delta(m) = (2m)!!/(2m+1)!! = 4^m (m!)^2/(2m+1)!`.
pub fn delta(m: u32) -> BigRat {
    assert!(m >= 1);
    let a = BigRat::new(double_factorial(2 * m as i64), double_factorial(2 * m as i64 + 1));
    let b = BigRat::new(
        BigInt::from(4).pow(m) * factorial(m as u64) * factorial(m as u64),
        factorial(2 * m as u64 + 1),
    );
    assert_eq!(a, b, "double-factorial and factorial forms of delta disagree");
    a
}

/// Number of pocket configurations per good profile.
pub fn pocket_profile_counts(m: u32) -> BTreeMap<Profile, BigInt> {
    assert!(m >= 1);
    let m = m as u64;
    let mut out = BTreeMap::new();
    out.insert(Profile::new(0, 0), binomial(m - 1, 2));
    out.insert(Profile::new(1, 1), BigInt::from(3 * m) - BigInt::from(2));
    out.insert(Profile::new(1, 0), BigInt::from(m - 1));
    out.insert(Profile::new(0, 1), BigInt::from(m - 1));
    out
}

/// Number of dumbbell configurations with `q` simple zeros on the first side,
/// per good profile.
pub fn dumbbell_profile_counts(m: u32, q: u32) -> Result<BTreeMap<Profile, BigInt>, SvError> {
    if m < 1 || q < 1 || q > m - 1 {
        return Err(SvError::QOutOfRange { m, q });
    }
    let mu = m as u64;
    let qi = q as i64;
    let weight = binomial(mu, qi) * BigInt::from(q) * BigInt::from(m - q);
    let mut out = BTreeMap::new();
    out.insert(Profile::new(0, 0), &weight * binomial(mu - 1, qi + 2));
    out.insert(
        Profile::new(1, 1),
        &weight * (BigInt::from(3) * binomial(mu - 1, qi + 1) + binomial(mu - 1, qi)),
    );
    out.insert(Profile::new(1, 0), &weight * binomial(mu - 1, qi + 1));
    out.insert(Profile::new(0, 1), &weight * binomial(mu - 1, qi + 1));
    Ok(out)
}

/// Multiplier relating a genus-zero configuration constant to the constant of
/// its lifted configurations.
pub fn lifting_factor(profile: Profile, pocket_like: bool, area_weighted: bool) -> Result<u32, SvError> {
    if !profile.is_good() {
        return Err(SvError::NotGoodProfile(profile));
    }
    let zero_profile = profile == Profile::new(0, 0);
    let factor = if area_weighted {
        // Area constants depend only on monodromy, not on pocket-likeness.
        if zero_profile { 64 } else { 8 }
    } else if pocket_like {
        if zero_profile { 32 } else { 4 }
    } else if zero_profile {
        64
    } else {
        8
    };
    Ok(factor)
}

/// Genus-zero pocket constant, `1/(2 pi^2)`.
pub fn c_pocket_genus0() -> PiRational {
    PiRational::new(rat(1, 2))
}

/// Genus-zero dumbbell constant for `q` simple zeros on the first side.
pub fn c_dumbbell_genus0(m: u32, q: u32) -> Result<PiRational, SvError> {
    if m < 1 || q < 1 || q > m - 1 {
        return Err(SvError::QOutOfRange { m, q });
    }
    let mu = m as u64;
    let qu = q as u64;
    let coeff = BigRat::new(
        BigInt::from(2) * factorial(2 * qu - 1) * factorial(2 * (mu - qu) - 1),
        factorial(2 * mu),
    );
    Ok(PiRational::new(coeff))
}

/// All good configuration classes for obstacle class `m`.
pub fn good_configurations(m: u32) -> Vec<ConfigClass> {
    let mut out = Vec::new();
    for (profile, count) in pocket_profile_counts(m) {
        out.push(ConfigClass {
            kind: ConfigKind::Pocket,
            profile,
            q: None,
            multiplicity_count: count,
        });
    }
    for q in 1..m {
        for (profile, count) in dumbbell_profile_counts(m, q).expect("q in range") {
            out.push(ConfigClass {
                kind: ConfigKind::Dumbbell,
                profile,
                q: Some(q),
                multiplicity_count: count,
            });
        }
    }
    out
}

fn pocket_assembly(m: u32, area_weighted: bool) -> BigRat {
    let mut acc = BigRat::zero();
    for (profile, count) in pocket_profile_counts(m) {
        let factor = lifting_factor(profile, true, area_weighted).expect("good profile");
        acc += rat_int(count) * rat_int(factor as i64) * c_pocket_genus0().coeff;
    }
    acc
}

fn dumbbell_assembly(m: u32, area_weighted: bool) -> BigRat {
    let mut acc = BigRat::zero();
    for q in 1..m {
        let c_q = c_dumbbell_genus0(m, q).expect("q in range").coeff;
        for (profile, count) in dumbbell_profile_counts(m, q).expect("q in range") {
            let factor = lifting_factor(profile, false, area_weighted).expect("good profile");
            acc += rat_int(count) * rat_int(factor as i64) * &c_q;
        }
    }
    acc
}

/// Good-pocket contribution, assembled and checked against its closed form
/// `(4m^2 - 7m + 4) * 2/pi^2`.
pub fn c_pocket_good(m: u32) -> Result<PiRational, SvError> {
    assert!(m >= 1);
    let assembled = pocket_assembly(m, false);
    let mi = m as i64;
    let closed = rat_int(2 * (4 * mi * mi - 7 * mi + 4));
    if assembled != closed {
        return Err(SvError::InternalMismatch(format!(
            "c_pocket_good(m={m}): assembly {assembled} vs closed {closed}"
        )));
    }
    Ok(PiRational::new(closed))
}

/// Good-dumbbell contribution, assembled and checked against the closed form
/// `(8m^2 - 74m - 90 + 78 * 4^m (m!)^2/(2m)!) * 2/(3 pi^2)` and against the
/// combination of the three `B(m,s)` closed forms.
pub fn c_dumbbell_good(m: u32) -> Result<PiRational, SvError> {
    assert!(m >= 1);
    let assembled = dumbbell_assembly(m, false);
    let mi = m as i64;
    let closed = rat(2, 3) * (rat_int(8 * mi * mi - 74 * mi - 90) + rat_int(78) * hyper_tail(m));
    let via_b = rat_int(4)
        * (rat_int(8) * b_closed(m, 2).expect("s=2")
            + rat_int(5) * b_closed(m, 1).expect("s=1")
            + b_closed(m, 0).expect("s=0"));
    if assembled != closed || via_b != closed {
        return Err(SvError::InternalMismatch(format!(
            "c_dumbbell_good(m={m}): assembly {assembled}, closed {closed}, via B {via_b}"
        )));
    }
    Ok(PiRational::new(closed))
}

/// Assemble every constant for obstacle class `m`, cross-checking each one
/// against its closed form.
pub fn constants_bundle(m: u32) -> Result<ConstantsBundle, SvError> {
    assert!(m >= 1);
    let mi = m as i64;
    let c_pocket = c_pocket_good(m)?;
    let c_dumbbell = c_dumbbell_good(m)?;
    let c_good = c_pocket.clone() + c_dumbbell.clone();

    let closed_good = rat(2, 3) * (rat_int(20 * mi * mi - 95 * mi - 78) + rat_int(78) * hyper_tail(m));
    if c_good.coeff != closed_good {
        return Err(SvError::InternalMismatch(format!(
            "c_good(m={m}): assembly {} vs closed {closed_good}",
            c_good.coeff
        )));
    }
    let c_main = c_good.clone() / rat_int(4);

    let odd = rat_int(2 * mi + 1);
    let c_area_good_assembled =
        PiRational::new((pocket_assembly(m, true) + dumbbell_assembly(m, true)) / &odd);
    let area_tail = hyper_tail(m) / &odd;
    let closed_area = rat(4, 3) * (rat_int(8 * mi - 33) + rat_int(39) * area_tail);
    if c_area_good_assembled.coeff != closed_area {
        return Err(SvError::InternalMismatch(format!(
            "c_area_good(m={m}): assembly {} vs closed {closed_area}",
            c_area_good_assembled.coeff
        )));
    }
    let c_area_main = c_area_good_assembled.clone() / rat_int(4);

    Ok(ConstantsBundle {
        m,
        delta: delta(m),
        c_pocket_good: c_pocket,
        c_dumbbell_good: c_dumbbell,
        c_good,
        c_main,
        c_area_good: c_area_good_assembled,
        c_area_main,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(delta(1), rat(2, 3));
        assert_eq!(delta(2), rat(8, 15));
        assert_eq!(delta(3), rat(16, 35));
    }

    #[test]
    fn pocket_counts_examples() {
        let c1 = pocket_profile_counts(1);
        assert_eq!(c1[&Profile::new(0, 0)], BigInt::from(0));
        assert_eq!(c1[&Profile::new(1, 1)], BigInt::from(1));
        assert_eq!(c1[&Profile::new(1, 0)], BigInt::from(0));
        let c2 = pocket_profile_counts(2);
        assert_eq!(c2[&Profile::new(1, 1)], BigInt::from(4));
        assert_eq!(c2[&Profile::new(1, 0)], BigInt::from(1));
        let c3 = pocket_profile_counts(3);
        assert_eq!(c3[&Profile::new(0, 0)], BigInt::from(1));
        assert_eq!(c3[&Profile::new(1, 1)], BigInt::from(7));
        assert_eq!(c3[&Profile::new(0, 1)], BigInt::from(2));
    }

    #[test]
    fn dumbbell_counts_examples() {
        let c = dumbbell_profile_counts(2, 1).unwrap();
        assert_eq!(c[&Profile::new(0, 0)], BigInt::from(0));
        assert_eq!(c[&Profile::new(1, 1)], BigInt::from(2));
        assert_eq!(c[&Profile::new(1, 0)], BigInt::from(0));
        let c = dumbbell_profile_counts(4, 1).unwrap();
        assert_eq!(c[&Profile::new(0, 0)], BigInt::from(12));
        let c = dumbbell_profile_counts(3, 1).unwrap();
        assert_eq!(c[&Profile::new(1, 1)], BigInt::from(30));
        assert!(matches!(
            dumbbell_profile_counts(3, 3),
            Err(SvError::QOutOfRange { .. })
        ));
        for m in 1..=20 {
            for q in 1..m {
                for count in dumbbell_profile_counts(m, q).unwrap().values() {
                    assert!(*count >= BigInt::from(0));
                }
            }
        }
    }

    #[test]
    fn lifting_factor_table() {
        let p00 = Profile::new(0, 0);
        let p11 = Profile::new(1, 1);
        let p10 = Profile::new(1, 0);
        assert_eq!(lifting_factor(p00, true, false).unwrap(), 32);
        assert_eq!(lifting_factor(p00, false, false).unwrap(), 64);
        assert_eq!(lifting_factor(p11, true, false).unwrap(), 4);
        assert_eq!(lifting_factor(p11, false, false).unwrap(), 8);
        assert_eq!(lifting_factor(p10, true, true).unwrap(), 8);
        assert_eq!(lifting_factor(p00, true, true).unwrap(), 64);
        assert!(matches!(
            lifting_factor(Profile::new(2, 1), true, false),
            Err(SvError::NotGoodProfile(_))
        ));
    }

    #[test]
    fn genus0_constants_examples() {
        assert_eq!(c_pocket_genus0().coeff, rat(1, 2));
        assert_eq!(c_dumbbell_genus0(2, 1).unwrap().coeff, rat(1, 12));
        assert_eq!(c_dumbbell_genus0(3, 1).unwrap().coeff, rat(1, 60));
        assert!(c_dumbbell_genus0(3, 0).is_err());
    }

    #[test]
    fn c_pocket_good_examples() {
        assert_eq!(c_pocket_good(1).unwrap().coeff, rat_int(2));
        assert_eq!(c_pocket_good(2).unwrap().coeff, rat_int(12));
    }

    #[test]
    fn c_dumbbell_good_examples() {
        assert_eq!(c_dumbbell_good(1).unwrap().coeff, rat_int(0));
        assert_eq!(c_dumbbell_good(2).unwrap().coeff, rat(4, 3));
        // m = 5 closed form equals the assembled q-sum (checked internally).
        c_dumbbell_good(5).unwrap();
    }

    #[test]
    fn bundle_examples() {
        let b1 = constants_bundle(1).unwrap();
        assert_eq!(b1.c_main.coeff, rat(1, 2));
        assert_eq!(b1.c_area_main.coeff, rat(1, 3));
        assert_eq!(b1.delta, rat(2, 3));
        let b2 = constants_bundle(2).unwrap();
        assert_eq!(b2.c_main.coeff, rat(10, 3));
        assert_eq!(b2.delta, rat(8, 15));
    }

    #[test]
    fn dual_paths_agree_up_to_50() {
        for m in 1..=50 {
            let b = constants_bundle(m).unwrap();
            assert!(b.c_main.coeff > rat_int(0), "c_main not positive at m={m}");
        }
    }

    #[test]
    fn pocket_total_consistency() {
        for m in 1..=50u64 {
            let total: BigInt = pocket_profile_counts(m as u32).values().sum();
            let expect = binomial(m - 1, 2) + BigInt::from(3 * m - 2) + BigInt::from(2 * (m - 1));
            assert_eq!(total, expect);
        }
    }

    #[test]
    fn delta_positive_and_decreasing() {
        let mut prev = rat_int(1);
        for m in 1..=30 {
            let d = delta(m);
            assert!(d > rat_int(0) && d < prev);
            prev = d;
        }
    }
}
