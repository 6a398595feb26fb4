//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the regression and bootstrap code is written against.
///
/// Blanket-implemented for `f32` and `f64`. Distribution functions (normal
/// tails, Kolmogorov quantiles) are evaluated in `f64` and converted back.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        <Self as FromPrimitive>::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + Serialize
        + DeserializeOwned
        + 'static
{
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    sum(xs) / T::from_usize_lossy(xs.len())
}

pub fn sum<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x)
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Mean of elementwise products.
pub fn mean_prod<T: Scalar>(a: &[T], b: &[T]) -> T {
    if a.is_empty() {
        return T::zero();
    }
    dot(a, b) / T::from_usize_lossy(a.len())
}

/// Largest absolute entry; zero for an empty slice.
pub fn max_abs<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Root-mean-square magnitude, used as the "scale" of a column in tolerance checks.
pub fn rms<T: Scalar>(xs: &[T]) -> T {
    mean_prod(xs, xs).sqrt()
}

/// Logistic function `e^x / (1 + e^x)`, evaluated without overflow.
#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of the logistic function.
#[inline]
pub fn logistic_deriv<T: Scalar>(x: T) -> T {
    let g = logistic(x);
    g * (T::one() - g)
}

/// Log-odds `ln(p / (1 - p))`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_matches_closed_form() {
        let g: f64 = logistic(3f64.ln());
        assert!((g - 0.75).abs() < 1e-15);
        assert_eq!(logistic(0.0f64), 0.5);
        assert!(logistic(-800.0f64) >= 0.0);
        assert!(logistic(800.0f64) <= 1.0);
        assert!((logit(0.75f64) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn helpers_work_in_f32() {
        let xs = [1.0f32, 2.0, 3.0];
        assert_eq!(mean(&xs), 2.0);
        assert_eq!(max_abs(&[-4.0f32, 1.0]), 4.0);
    }
}
