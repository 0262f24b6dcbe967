//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point type the toolkit can run on (`f32` or `f64`).
///
/// Everything numerical is generic over this trait; the `f64` aliases at the
/// crate root are what the CLI and the tolerances in the docs assume.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` constant into the scalar type.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self {
        <Self as approx::AbsDiffEq>::default_epsilon()
    }
}

impl<T> Scalar for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Absolute value without the `Signed`/`ComplexField` method ambiguity.
#[inline]
pub fn abs<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        -x
    } else {
        x
    }
}

/// `+1` for non-negative input, `-1` otherwise.
#[inline]
pub fn sign<S: Scalar>(x: S) -> S {
    if x < S::zero() {
        -S::one()
    } else {
        S::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip_for_both_precisions() {
        assert_eq!(<f64 as Scalar>::lit(0.25), 0.25);
        assert_eq!(<f32 as Scalar>::lit(0.25), 0.25f32);
        assert!(<f32 as Scalar>::eps() > <f64 as Scalar>::eps() as f32);
    }

    #[test]
    fn abs_and_sign() {
        assert_eq!(abs(-2.0f64), 2.0);
        assert_eq!(sign(0.0f64), 1.0);
        assert_eq!(sign(-1e-300f64), -1.0);
    }
}
