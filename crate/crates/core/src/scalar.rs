//! Scalar abstraction used by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating point scalar the library is generic over.
///
/// Implemented for `f32` and `f64`. Routines that need transcendental
/// accuracy beyond what `f32` can represent evaluate internally in `f64`
/// and convert back, so the `f32` instantiation stays usable.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` used for constants.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    /// Widening conversion used when a routine computes in `f64` internally.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ceil(level * n) - 1` clamped to `[0, n - 1]`: index of the lower
/// empirical quantile in a sorted array of length `n`.
pub fn lower_quantile_index<T: Real>(level: T, n: usize) -> usize {
    debug_assert!(n > 0);
    let scaled = (level * T::from_usize(n).unwrap()).ceil();
    let idx = scaled.to_isize().unwrap_or(0) - 1;
    idx.clamp(0, n as isize - 1) as usize
}

/// Lower empirical quantile of a sorted slice.
pub fn lower_quantile<T: Real>(sorted: &[T], level: T) -> T {
    sorted[lower_quantile_index(level, sorted.len())]
}
