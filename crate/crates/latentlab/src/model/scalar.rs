//! Float abstraction so the same forward/backward code runs in f32 for
//! training and in f64 for the finite-difference oracle.

use ndarray::LinalgScalar;
use num_traits::Float;

pub trait Scalar:
    LinalgScalar + Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
}
