//! Numeric backends: exact rationals and `f64`.
//!
//! Every algorithm in the crate is generic over [`Scalar`]. The rational
//! backend gives bit-exact identity checks; the float backend is used for
//! deep trees and for quantities involving fractional powers.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + num_traits::Num
    + Signed
    + for<'a> std::ops::Add<&'a Self, Output = Self>
    + for<'a> std::ops::Sub<&'a Self, Output = Self>
    + for<'a> std::ops::Mul<&'a Self, Output = Self>
    + for<'a> std::ops::Div<&'a Self, Output = Self>
{
    /// True when arithmetic is exact.
    const EXACT: bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn from_i64(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    /// Exact binary conversion for rationals.
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Square root when it is representable in the backend.
    fn sqrt_exact(&self) -> Option<Self>;

    fn max_of(a: &Self, b: &Self) -> Self {
        if a >= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    fn min_of(a: &Self, b: &Self) -> Self {
        if a <= b {
            a.clone()
        } else {
            b.clone()
        }
    }

    fn pos_part(&self) -> Self {
        if self.is_positive() {
            self.clone()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sqrt_exact(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(self.sqrt())
        }
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(BigRational::zero)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sqrt_exact(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let n = self.numer();
        let d = self.denom();
        let rn = n.sqrt();
        let rd = d.sqrt();
        if &(&rn * &rn) == n && &(&rd * &rd) == d {
            Some(BigRational::new(rn, rd))
        } else {
            None
        }
    }
}

/// Compare two values: exact equality for rationals, a mixed
/// absolute/relative tolerance for floats.
pub fn close<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    if S::EXACT {
        a == b
    } else {
        let (x, y) = (a.to_f64(), b.to_f64());
        (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
    }
}

/// Absolute discrepancy as `f64` (exactly zero when equal in the backend).
pub fn discrepancy<S: Scalar>(a: &S, b: &S) -> f64 {
    if a == b {
        0.0
    } else {
        let d = (a.clone() - b.clone()).abs().to_f64();
        if d == 0.0 && S::EXACT {
            f64::MIN_POSITIVE
        } else {
            d
        }
    }
}

pub fn sum<S: Scalar, I: IntoIterator<Item = S>>(it: I) -> S {
    it.into_iter().fold(S::zero(), |acc, x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_sqrt() {
        let q = Rational::from_ratio(9, 4);
        assert_eq!(q.sqrt_exact(), Some(Rational::from_ratio(3, 2)));
        assert_eq!(Rational::from_ratio(1, 2).sqrt_exact(), None);
        assert_eq!(Rational::from_ratio(-1, 4).sqrt_exact(), None);
    }

    #[test]
    fn exact_compare() {
        let a = Rational::from_ratio(1, 3);
        let b = Rational::from_ratio(2, 6);
        assert!(close(&a, &b, 0.0));
        assert_eq!(discrepancy(&a, &b), 0.0);
        assert!(discrepancy(&a, &Rational::from_ratio(1, 4)) > 0.0);
        assert!(close(&0.1f64, &(0.3 - 0.2), 1e-12));
    }
}
