//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the model can be instantiated with (`f32` or `f64`).
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + LowerExp
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    const INFINITY: Self;
    const NEG_INFINITY: Self;
    /// Decimal digits after the point needed to print a value losslessly in
    /// scientific notation.
    const ROUND_TRIP_DIGITS: usize;

    /// Literal conversion; every constant in the crate goes through here.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty, $digits:expr) => {
        impl Scalar for $t {
            const INFINITY: Self = <$t>::INFINITY;
            const NEG_INFINITY: Self = <$t>::NEG_INFINITY;
            const ROUND_TRIP_DIGITS: usize = $digits;

            #[inline]
            fn is_finite_value(self) -> bool {
                self.is_finite()
            }
        }
    };
}

// 17 significant digits for f64; f32 needs 9 but the same width is harmless.
impl_scalar!(f32, 16);
impl_scalar!(f64, 16);
