// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Debug;
use std::iter::Sum;

/// Floating point scalar the statistics are evaluated in: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; finite inputs always succeed for `f32`/`f64`.
    fn of(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
