//! Scalar abstraction shared by the contest model and the equilibrium solver.
//!
//! Every closed form in the contest model is a rational function of the
//! primitives, so the same code runs on `f32`, `f64` and exact rationals.
//! Floating types compare with a small tolerance; rationals compare exactly.

use std::fmt::{Debug, Display};

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Absolute tolerance used when a strict inequality must not be decided
    /// by rounding noise. Zero for exact types.
    fn tolerance() -> Self;

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `self > other` beyond tolerance.
    fn gt_tol(self, other: Self) -> bool {
        self - other > Self::tolerance()
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-6
    }
}

impl Scalar for Ratio<i64> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

impl Scalar for Ratio<i128> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_tolerance_is_exact() {
        let a = Ratio::<i64>::new(1, 3);
        let b = Ratio::<i64>::new(1, 3) + Ratio::new(1, 1_000_000_000);
        assert!(b.gt_tol(a));
        assert!(!a.gt_tol(a));
    }

    #[test]
    fn float_tolerance_absorbs_noise() {
        assert!(!(0.1f64 + 0.2).gt_tol(0.3));
        assert_eq!(<f64 as Scalar>::from_count(7), 7.0);
    }
}
