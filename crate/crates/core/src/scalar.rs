//! Scalar abstraction shared by the numeric core.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the kinematic, task, stack, cost and simulation
/// code is generic over: `f32` or `f64`.
pub trait Real:
    RealField + Copy + Default + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest relative step that is still meaningful for rank decisions.
    fn rank_eps() -> Self;
}

impl Real for f32 {
    fn rank_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn rank_eps() -> Self {
        f64::EPSILON
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}
