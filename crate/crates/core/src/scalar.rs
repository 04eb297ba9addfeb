//! Scalar traits shared by every module.
//!
//! Combinatorial and algebraic code (polynomials, atomic moments, moment
//! matrices) only needs ring operations and is written against [`Field`], so
//! it runs unchanged on `f32`, `f64` and exact rationals. Anything that takes
//! square roots, eigenvalues or trigonometric functions needs [`Real`].

use std::fmt::Debug;

use nalgebra as na;
use num_traits as nt;

/// Exact-capable scalar: `f32`, `f64`, `Ratio<i64>`, ...
pub trait Field:
    Clone + Debug + PartialOrd + nt::Num + nt::FromPrimitive + na::Scalar + Send + Sync
{
}

impl<T> Field for T where
    T: Clone + Debug + PartialOrd + nt::Num + nt::FromPrimitive + na::Scalar + Send + Sync
{
}

/// Floating point scalar (`f32` or `f64`).
pub trait Real: Field + Copy + na::RealField + nt::ToPrimitive {}

impl<T> Real for T where T: Field + Copy + na::RealField + nt::ToPrimitive {}

/// Lossy conversion from an `f64` literal.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    na::convert(x)
}

/// Conversion to `f64` for reporting and tolerance bookkeeping.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    nt::ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Integer to scalar, exact for every `Field` we use.
#[inline]
pub fn from_int<T: Field>(k: i64) -> T {
    T::from_i64(k).expect("integer not representable in scalar type")
}
