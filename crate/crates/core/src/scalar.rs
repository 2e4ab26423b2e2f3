//! Scalar abstraction shared by every numerical module.
//!
//! All physics is written against [`Real`], which is implemented for `f32` and
//! `f64`. Exact arithmetic (Wigner symbols) lives in `atomic_structure` and is
//! converted into a `Real` at the boundary.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// floating point: f32 or f64
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for `T::lit`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Field element usable by the dense solvers: either a `Real` or a `Complex<Real>`.
pub trait LinScalar: Copy + NumAssign + std::ops::Neg<Output = Self> + Debug + Send + Sync + 'static {
    type Modulus: Real;

    /// Magnitude used for pivot selection (1-norm for complex values).
    fn modulus(self) -> Self::Modulus;
    fn from_real(x: Self::Modulus) -> Self;
}

impl<T: Real> LinScalar for T {
    type Modulus = T;

    #[inline]
    fn modulus(self) -> T {
        self.abs()
    }

    #[inline]
    fn from_real(x: T) -> T {
        x
    }
}

impl<T: Real> LinScalar for Complex<T> {
    type Modulus = T;

    #[inline]
    fn modulus(self) -> T {
        self.re.abs() + self.im.abs()
    }

    #[inline]
    fn from_real(x: T) -> Self {
        Complex::new(x, T::zero())
    }
}
