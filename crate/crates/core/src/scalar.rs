//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the simulator: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly rounded) in `f32`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for structural checks (row sums, symmetry). `tight` is the
    /// requested `f64` tolerance; narrow types fall back to a few ulps scaled by `n`.
    fn check_tol(tight: f64, n: usize) -> Self {
        let floor = Self::epsilon() * Self::from_usize_lossy(8 * n.max(1));
        Self::lit(tight).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
