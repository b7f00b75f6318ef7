//! Scalar abstraction for the numerical kernels.
//!
//! All dense and sparse linear algebra in this crate is generic over the
//! underlying real field, so the same code runs in `f32` and `f64`.
//! Concrete aliases (`Operator64`, `Superoperator64`, ...) live at the
//! crate root.

use num_complex::Complex;

/// Real scalar type usable throughout the crate.
pub trait Scalar:
    nalgebra::RealField
    + num_traits::Float
    + num_traits::FromPrimitive
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand for a literal converted from `f64`.
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("literal conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over a [`Scalar`] real field.
pub type C<T> = Complex<T>;

/// Complex zero.
pub fn czero<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

/// Complex one.
pub fn cone<T: Scalar>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// Imaginary unit.
pub fn ci<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::one())
}

/// Real literal lifted to a complex value.
pub fn creal<T: Scalar>(x: f64) -> C<T> {
    Complex::new(T::lit(x), T::zero())
}
