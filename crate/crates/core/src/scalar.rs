//! Floating-point abstraction for the numerical core.
//!
//! Everything in this crate is generic over [`Scalar`] so that the same code
//! runs in `f32` (quick smoke runs) and `f64` (the experiment suites).  The
//! trait is a thin bundle over the `num-traits` float surface plus the bounds
//! needed to move values across threads and format diagnostics.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Shorthand for pulling an `f64` literal into the scalar type.
    #[inline]
    fn real(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    /// Lossy view as `f64`, used only for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Display
        + LowerExp
        + Debug
        + Send
        + Sync
        + 'static
{
}
