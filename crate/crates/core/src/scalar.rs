//! Numeric abstraction shared by the counters, the lifted engine and the
//! linear solver.
//!
//! Everything is written against [`Scalar`]. The exact instantiation
//! ([`crate::Rational`]) is what the library uses for every reported value;
//! `f64` is available for quick experiments and timing runs where bit growth
//! of exact fractions is not the quantity being measured.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

pub trait Scalar: Num + Signed + Clone + Debug + Display + PartialOrd + Send + Sync + 'static {
    fn from_rational(r: &BigRational) -> Self;

    fn from_i64(v: i64) -> Self;

    /// Approximate magnitude, used for pivot selection only.
    fn magnitude(&self) -> f64;

    /// Whether arithmetic is exact. Inexact scalars compare against a
    /// tolerance in the solver.
    fn is_exact() -> bool;

    fn complement(&self) -> Self {
        Self::one() - self.clone()
    }

    fn ipow(&self, exp: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    fn approx_zero(&self) -> bool {
        if Self::is_exact() {
            self.is_zero()
        } else {
            self.magnitude() < 1e-12
        }
    }
}

impl Scalar for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }

    fn is_exact() -> bool {
        true
    }
}

impl Scalar for f64 {
    fn from_rational(r: &BigRational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn is_exact() -> bool {
        false
    }
}

/// Binomial coefficient as a scalar.
pub fn binomial<S: Scalar>(n: u64, k: u64) -> S {
    if k > n {
        return S::zero();
    }
    let b: BigInt = num_integer::binomial(BigInt::from(n), BigInt::from(k));
    S::from_rational(&BigRational::from_integer(b))
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Renders a rational as a decimal with at most `digits` fractional digits,
/// trailing zeros trimmed. Rounds half away from zero.
pub fn to_decimal(r: &BigRational, digits: usize) -> String {
    let neg = r.is_negative();
    let r = r.abs();
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = r * BigRational::from_integer(scale.clone());
    let rounded = (scaled + BigRational::new(BigInt::one(), BigInt::from(2))).floor().to_integer();
    let int_part = &rounded / &scale;
    let frac_part = &rounded % &scale;
    let mut s = String::new();
    if neg && !rounded.is_zero() {
        s.push('-');
    }
    s.push_str(&int_part.to_string());
    if digits > 0 {
        let frac = format!("{:0>width$}", frac_part.to_string(), width = digits);
        let frac = frac.trim_end_matches('0');
        if !frac.is_empty() {
            s.push('.');
            s.push_str(frac);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal(&ratio(63, 200), 6), "0.315");
        assert_eq!(to_decimal(&ratio(1, 3), 4), "0.3333");
        assert_eq!(to_decimal(&ratio(2, 3), 2), "0.67");
        assert_eq!(to_decimal(&ratio(1, 1), 3), "1");
        assert_eq!(to_decimal(&ratio(0, 1), 3), "0");
    }

    #[test]
    fn powers_and_binomials() {
        assert_eq!(ratio(1, 2).ipow(3), ratio(1, 8));
        assert_eq!(ratio(5, 7).ipow(0), ratio(1, 1));
        assert_eq!(binomial::<BigRational>(5, 2), ratio(10, 1));
        assert_eq!(binomial::<f64>(4, 5), 0.0);
        assert_eq!(Scalar::ipow(&3.0f64, 4), 81.0);
    }
}
