//! Exact simulation time.
//!
//! All scheduling is done on reduced rationals so that tie-breaking and
//! trace comparison never depend on floating point rounding. `TimeValue` is
//! the non-negative domain of time advances (with a distinct infinity);
//! signed instants such as the time of last transition before `t = 0` are
//! plain [`Rational`]s.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use thiserror::Error;

/// Arbitrary precision signed rational, always kept in lowest terms.
pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("malformed time literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("negative time {0}")]
    Negative(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Finite(Rational),
    Infinity,
}

/// A non-negative exact time, or `+inf`.
///
/// Ordering is total and `inf` compares greater than every finite value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeValue(Repr);

impl TimeValue {
    pub const INFINITY: TimeValue = TimeValue(Repr::Infinity);

    pub fn zero() -> Self {
        TimeValue(Repr::Finite(Rational::zero()))
    }

    pub fn from_int(n: u64) -> Self {
        TimeValue(Repr::Finite(Rational::from_integer(BigInt::from(n))))
    }

    /// `p/q`, reduced. Fails on a zero denominator or a negative value.
    pub fn finite(p: i64, q: i64) -> Result<Self, TimeError> {
        if q == 0 {
            return Err(TimeError::ZeroDenominator(format!("{p}/{q}")));
        }
        Self::from_rational(Rational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn from_rational(r: Rational) -> Result<Self, TimeError> {
        if r.is_negative() {
            Err(TimeError::Negative(r.to_string()))
        } else {
            Ok(TimeValue(Repr::Finite(r)))
        }
    }

    /// `base + span`, where `base` may be negative. Fails if the result is.
    pub fn shifted(base: &Rational, span: &TimeValue) -> Result<Self, TimeError> {
        match &span.0 {
            Repr::Infinity => Ok(Self::INFINITY),
            Repr::Finite(d) => Self::from_rational(base + d),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.0, Repr::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        !self.is_finite()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match &self.0 {
            Repr::Finite(r) => Some(r),
            Repr::Infinity => None,
        }
    }

    pub fn into_rational(self) -> Option<Rational> {
        match self.0 {
            Repr::Finite(r) => Some(r),
            Repr::Infinity => None,
        }
    }

    /// `self - other` if it is non-negative. `inf - x` is `inf` for finite `x`;
    /// subtracting infinity yields `None`.
    pub fn checked_sub(&self, other: &TimeValue) -> Option<TimeValue> {
        match (&self.0, &other.0) {
            (Repr::Infinity, Repr::Finite(_)) => Some(Self::INFINITY),
            (_, Repr::Infinity) => None,
            (Repr::Finite(a), Repr::Finite(b)) => Self::from_rational(a - b).ok(),
        }
    }

    /// `self - r` for a plain rational; `None` when negative.
    pub fn checked_sub_rational(&self, r: &Rational) -> Option<TimeValue> {
        match &self.0 {
            Repr::Infinity => Some(Self::INFINITY),
            Repr::Finite(a) => Self::from_rational(a - r).ok(),
        }
    }

    /// Compares a rational against this time; `inf` exceeds every rational.
    pub fn cmp_rational(&self, r: &Rational) -> Ordering {
        match &self.0 {
            Repr::Infinity => Ordering::Greater,
            Repr::Finite(a) => a.cmp(r),
        }
    }
}

impl Add for &TimeValue {
    type Output = TimeValue;

    fn add(self, rhs: &TimeValue) -> TimeValue {
        match (&self.0, &rhs.0) {
            (Repr::Finite(a), Repr::Finite(b)) => TimeValue(Repr::Finite(a + b)),
            _ => TimeValue::INFINITY,
        }
    }
}

impl Add for TimeValue {
    type Output = TimeValue;

    fn add(self, rhs: TimeValue) -> TimeValue {
        &self + &rhs
    }
}

impl Default for TimeValue {
    fn default() -> Self {
        Self::zero()
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Finite(r) => write!(f, "{r}"),
            Repr::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for TimeValue {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            return Ok(Self::INFINITY);
        }
        Self::from_rational(parse_rational(s)?)
    }
}

/// Parses `[-]INT`, `[-]INT/INT` or `[-]INT.DIGITS` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, TimeError> {
    let malformed = || TimeError::Malformed(s.to_string());
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    let value = if let Some((p, q)) = body.split_once('/') {
        if !digits(p) || !digits(q) {
            return Err(malformed());
        }
        let q: BigInt = q.parse().map_err(|_| malformed())?;
        if q.is_zero() {
            return Err(TimeError::ZeroDenominator(s.to_string()));
        }
        Rational::new(p.parse().map_err(|_| malformed())?, q)
    } else if let Some((int, frac)) = body.split_once('.') {
        if !digits(int) || !digits(frac) {
            return Err(malformed());
        }
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let numer: BigInt = format!("{int}{frac}").parse().map_err(|_| malformed())?;
        Rational::new(numer, scale)
    } else {
        if !digits(body) {
            return Err(malformed());
        }
        Rational::from_integer(body.parse().map_err(|_| malformed())?)
    };
    Ok(if negative { -value } else { value })
}

/// Shorthand used throughout the tests and fixtures: `rat(97, 2)`.
pub fn rat(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> TimeValue {
        s.parse().unwrap()
    }

    #[test]
    fn canonical_printing() {
        assert_eq!(t("71.5").to_string(), "143/2");
        assert_eq!(t("48.50").to_string(), "97/2");
        assert_eq!(t("94/2").to_string(), "47");
        assert_eq!(t("0/7").to_string(), "0");
        assert_eq!(t("inf").to_string(), "inf");
        assert_eq!(TimeValue::finite(6, 4).unwrap().to_string(), "3/2");
    }

    #[test]
    fn rejects_bad_literals() {
        assert!(matches!("1/0".parse::<TimeValue>(), Err(TimeError::ZeroDenominator(_))));
        assert!(matches!("-3".parse::<TimeValue>(), Err(TimeError::Negative(_))));
        for bad in ["", "1.", ".5", "1/", "/2", "1e3", "+1", "1/-2", "inf/2", " 1", "--1"] {
            assert!(bad.parse::<TimeValue>().is_err(), "{bad:?} accepted");
        }
        assert_eq!(parse_rational("-3/6").unwrap(), rat(-1, 2));
    }

    #[test]
    fn infinity_ordering_and_arithmetic() {
        let inf = TimeValue::INFINITY;
        assert!(inf > t("1000000000000000000000000"));
        assert_eq!(&inf + &t("3"), inf);
        assert_eq!(inf.checked_sub(&t("3")), Some(TimeValue::INFINITY));
        assert_eq!(t("3").checked_sub(&inf), None);
        assert_eq!(t("3").checked_sub(&t("7/2")), None);
        assert_eq!(TimeValue::shifted(&rat(-10, 1), &t("57")).unwrap(), t("47"));
        assert!(TimeValue::shifted(&rat(-10, 1), &t("3")).is_err());
    }

    fn finite() -> impl Strategy<Value = TimeValue> {
        (0i64..10_000, 1i64..500).prop_map(|(p, q)| TimeValue::finite(p, q).unwrap())
    }

    proptest! {
        #[test]
        fn add_then_sub_is_exact(a in finite(), b in finite()) {
            let sum = &a + &b;
            prop_assert_eq!(sum.checked_sub(&b), Some(a));
        }

        #[test]
        fn min_is_a_member(xs in prop::collection::vec(finite(), 1..12)) {
            let m = xs.iter().min().unwrap();
            prop_assert!(xs.contains(m));
            prop_assert!(m < &TimeValue::INFINITY);
        }

        #[test]
        fn display_parse_round_trip(a in finite()) {
            prop_assert_eq!(a.to_string().parse::<TimeValue>().unwrap(), a);
        }
    }
}
