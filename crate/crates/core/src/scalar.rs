//! Scalar abstraction: every numeric kernel is generic over the floating
//! type, with `f32` and `f64` supported out of the box.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::{Product, Sum};

/// Floating scalar the library is generic over.
///
/// A blanket implementation covers any type with the listed numeric
/// capabilities; in practice this means `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Product
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    ///
    /// Panics only if the conversion is unrepresentable, which cannot happen
    /// for IEEE floating targets.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("floating literal conversion")
    }

    /// Converts a `usize` (grid sizes, counts) into the scalar type.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count conversion")
    }

    /// Widens the scalar to `f64` (serialization, diagnostics).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("widening conversion to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Sum
        + Product
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Complex number over the library scalar.
pub type C<T> = Complex<T>;

/// Unit phase `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    C::new(theta.cos(), theta.sin())
}

/// Complex zero.
#[inline]
pub fn czero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// Complex one.
#[inline]
pub fn cone<T: Real>() -> C<T> {
    C::new(T::one(), T::zero())
}

/// Embeds a real scalar as a complex number.
#[inline]
pub fn creal<T: Real>(x: T) -> C<T> {
    C::new(x, T::zero())
}
