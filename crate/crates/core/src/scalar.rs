//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the solver: `f32` or `f64`.
pub trait Real:
    Float
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
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Relative tolerance under which two costs count as tied.
pub fn tie_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(16.0))
}

/// Index of the smallest value; entries within `rel_tol` of the minimum count
/// as ties and resolve to the lowest index.
pub fn argmin_lowest<T: Real>(values: &[T], rel_tol: T) -> usize {
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let slack = min.abs() * rel_tol;
    values
        .iter()
        .position(|&v| v <= min + slack)
        .expect("non-empty value list")
}

/// All indices whose value lies within `rel_tol` (relative) of the minimum.
pub fn argmin_set<T: Real>(values: &[T], rel_tol: T) -> Vec<usize> {
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let slack = min.abs() * rel_tol;
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= min + slack)
        .map(|(i, _)| i)
        .collect()
}
