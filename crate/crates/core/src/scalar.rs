//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All pricing, elasticity and simulation code is written against [`Scalar`]
//! so it can be instantiated with `f64` (the default used by the aliases at
//! the crate root) or `f32` for cheaper bulk simulation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point type usable by the engine: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Draws one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Standard normal cumulative distribution function, `N(x) = erfc(-x/√2)/2`.
///
/// In `f64` the absolute error is below 1e-15 over the whole real line.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (-x * T::FRAC_1_SQRT_2()).erfc()
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    (-T::lit(0.5) * x * x).exp() / (T::TAU()).sqrt()
}

/// Relative difference `|a-b| / max(|a|, |b|, floor)`.
pub fn rel_diff<T: Scalar>(a: T, b: T, floor: T) -> T {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        // mpmath, 30 digits
        let cases = [
            (0.0, 0.5),
            (1.0, 0.841_344_746_068_542_9),
            (-1.96, 0.0249978951482204),
            (3.5, 0.999767370920964),
            (-8.0, 6.22096057427178e-16),
        ];
        for (x, want) in cases {
            let got = norm_cdf(x);
            assert!((got - want).abs() < 1e-15, "N({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_symmetry_and_f32() {
        for i in -40..=40 {
            let x = f64::from(i) * 0.2;
            assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() < 1e-15);
            let x32 = x as f32;
            assert!((f64::from(norm_cdf(x32)) - norm_cdf(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn pdf_peak() {
        assert!((norm_pdf(0.0_f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }
}
