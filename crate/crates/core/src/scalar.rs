//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the geometry and transport code is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy widening used for error payloads and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance of `base`, floored at `mult` machine epsilons so that
    /// single-precision callers get a tolerance they can actually meet.
    #[inline]
    fn tol(base: f64, mult: f64) -> Self {
        Self::lit(base).max(Self::epsilon() * Self::lit(mult))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-10, 64.0), 1e-10);
        let t32 = <f32 as Scalar>::tol(1e-10, 64.0);
        assert!(t32 > 1e-6 && t32 < 1e-5);
    }
}
