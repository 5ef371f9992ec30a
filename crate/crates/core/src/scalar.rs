//! Scalar abstraction shared by every numerical module.
//!
//! All solvers are written against [`Real`] so the same code runs in `f32`
//! and `f64`. Tolerances quoted throughout the crate assume `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a `T` into `f64`.
#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar representable as f64")
}

#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}

/// Lanczos coefficients for g = 7, n = 9.
///
/// This is the set published by Godfrey and reproduced in most numerical
/// libraries. With the reflection formula below it gives relative error
/// below 1e-14 for real arguments in (0, 3) in `f64`.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation.
///
/// Uses the reflection formula `Γ(x)Γ(1−x) = π / sin(πx)` for `x < 1/2`.
/// Returns NaN at the poles (non-positive integers).
pub fn gamma<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x <= T::zero() && x.fract() == T::zero() {
        return T::nan();
    }
    if x < half {
        let pi = T::PI();
        return pi / ((pi * x).sin() * gamma(T::one() - x));
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS_COEFFS[0]);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += lit::<T>(c) / (x + from_usize::<T>(i));
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    let two_pi: T = lit(2.0 * std::f64::consts::PI);
    two_pi.sqrt() * t.powf(x + half) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_known_values() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!(rel(gamma(1.0), 1.0) < 1e-14);
        assert!(rel(gamma(2.0), 1.0) < 1e-14);
        assert!(rel(gamma(0.5), sqrt_pi) < 1e-14);
        assert!(rel(gamma(1.5), sqrt_pi / 2.0) < 1e-14);
        assert!(rel(gamma(2.5), 3.0 * sqrt_pi / 4.0) < 1e-14);
        assert!(rel(gamma(3.0), 2.0) < 1e-14);
    }

    #[test]
    fn gamma_recurrence_on_unit_interval() {
        // Γ(x+1) = xΓ(x) ties every point of (0,3) to the accuracy of the others.
        for i in 1..300 {
            let x = i as f64 * 0.01;
            assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn gamma_single_precision() {
        let g: f32 = gamma(1.5f32);
        assert!((g - 0.886_226_9).abs() < 1e-6);
    }

    #[test]
    fn gamma_poles_are_nan() {
        assert!(gamma(0.0f64).is_nan());
        assert!(gamma(-1.0f64).is_nan());
    }
}
