//! The scalar abstraction threaded through every kernel.
//!
//! All integrators, root finders and vector fields are generic over [`Real`]
//! so that the same algorithm runs in native `f64` or in compensated
//! double-word arithmetic. Only field operations and square roots are
//! required; transcendental functions stay in `f64`.

use std::fmt::Debug;
use std::ops::{AddAssign, Neg, SubAssign};

use num_traits::Num;
use serde::{Deserialize, Serialize};

use super::dd::DoubleDouble;

/// Arithmetic mode used by a computation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    Native,
    Compensated,
}

impl Precision {
    /// Unit roundoff of the mode.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Native => f64::EPSILON / 2.0,
            Precision::Compensated => 2f64.powi(-106),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Native => "native",
            Precision::Compensated => "compensated",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" | "f64" | "native-64-bit" => Ok(Precision::Native),
            "compensated" | "dd" | "double-double" | "compensated-double-word" => {
                Ok(Precision::Compensated)
            }
            other => Err(format!("unknown precision mode `{other}` (expected native|compensated)")),
        }
    }
}

pub trait Real:
    Num + Copy + Clone + Debug + PartialOrd + Neg<Output = Self> + AddAssign + SubAssign + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    /// `n / d` rounded in the working precision.
    #[inline]
    fn ratio(n: i64, d: i64) -> Self {
        Self::from_f64(n as f64) / Self::from_f64(d as f64)
    }

    #[inline]
    fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    #[inline]
    fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    #[inline]
    fn signum_f64(self) -> f64 {
        let v = self.to_f64();
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    #[inline]
    fn mul_f(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Native;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn mul_f(self, c: f64) -> Self {
        self * c
    }
}

impl Real for DoubleDouble {
    const PRECISION: Precision = Precision::Compensated;

    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        DoubleDouble::is_finite(self)
    }
    #[inline]
    fn mul_f(self, c: f64) -> Self {
        self.mul_f64(c)
    }
}

/// Euclidean norm of a small vector.
pub fn norm<T: Real, const N: usize>(v: &[T; N]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact_in_compensated_mode() {
        let third = DoubleDouble::ratio(1, 3);
        let err = (third * DoubleDouble::from_f64(3.0) - DoubleDouble::ONE).to_f64();
        assert!(err.abs() < 1e-31);
        assert_eq!(<f64 as Real>::ratio(1, 4), 0.25);
    }

    #[test]
    fn precision_parses() {
        assert_eq!("native".parse::<Precision>().unwrap(), Precision::Native);
        assert_eq!("compensated".parse::<Precision>().unwrap(), Precision::Compensated);
        assert!("quad".parse::<Precision>().is_err());
    }
}
