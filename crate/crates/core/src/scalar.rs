//! Scalar abstraction: all field and network math is generic over the
//! floating-point type; `f64` is the concrete type used by the runners
//! and by every serialized format.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + Sum
    + SampleUniform
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance for the sphere-norm invariant.
    const NORM_TOL: Self;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn from_f(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 conversion")
    }

    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    const NORM_TOL: Self = 1e-12;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NORM_TOL: Self = 1e-5;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}
