//! Scalar abstraction shared by the numeric modules.
//!
//! Everything that does floating-point math (ranking metrics, the bilinear
//! resampler, heatmap composition, distillation losses, answer-token
//! probabilities) is written against [`Real`], so the same code runs in
//! `f32` for pixel pipelines and `f64` for evaluation and gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in a float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)`, stable for large `|z|`.
pub fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// `ln σ(z) = -softplus(-z)`.
pub fn log_sigmoid<T: Real>(z: T) -> T {
    -softplus(-z)
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0_f64), 0.0);
        assert_eq!(sigmoid(1000.0_f64), 1.0);
        assert_eq!(sigmoid(0.0_f32), 0.5);
        assert!((sigmoid(1.0_f64) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for z in [-20.0, -1.0, 0.0, 0.5, 3.0, 20.0_f64] {
            let naive = (1.0 + z.exp()).ln();
            assert!((softplus(z) - naive).abs() < 1e-12, "z={z}");
        }
        assert_eq!(softplus(800.0_f64), 800.0);
        assert!(log_sigmoid(-800.0_f64).is_finite());
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0_f32, 2.0, 3.0]), Some(2.0));
    }
}
