//! Scalar abstraction shared by every numeric module.

use nalgebra as na;
use num_traits as nt;

/// Floating point scalar usable by the kinematics, sensing and control code.
///
/// Math goes through [`na::RealField`] (`sin`, `atan2`, `sqrt`, ...); the
/// num-traits bounds supply literals and named constants.
pub trait Real: na::RealField + Copy + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Default {
    /// Converts an `f64` literal.
    fn lit(v: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(v).expect("f64 literal fits the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let pi = T::pi();
    let r = a - two_pi * ((a - pi) / two_pi).ceil();
    // ceil can land exactly on -pi after rounding
    if r <= -pi {
        r + two_pi
    } else {
        r
    }
}

/// Wrapped difference `a - b`.
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b)
}
