//! Scalar trait bound for the numeric core.

use std::fmt::{Debug, Display};

/// Floating-point element type for tensors, poses and losses.
///
/// Everything numeric in the crate is written against this bound; `f32` and
/// `f64` implement it. The pipeline's concrete aliases pin `f64` (see the
/// crate root).
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssignOps
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Widen to `f64` (exact for both supported types).
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
