//! Differentiable building blocks for the sequence classifiers.
//!
//! Every kernel is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient checking. Sequence matrices are
//! `channels x time`: column `t` is the vector at time step `t`.

mod conv;
mod dense;
mod lstm;
mod ops;
mod optim;

use ndarray::{Array, Dimension, NdFloat, ShapeBuilder};
use rand::Rng;

pub use conv::{Conv1d, Conv1dCache};
pub use dense::Dense;
pub use lstm::{Lstm, LstmCache};
pub use ops::{
    cross_entropy, dropout, global_max_pool, max_pool_backward, relu, relu_backward, softmax,
    softmax_cross_entropy_backward, DropoutMask, Pooled, PROB_FLOOR,
};
pub use optim::RmsProp;

/// Floating point element type of the networks.
pub trait Real: NdFloat + std::iter::Sum + Default {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Anything holding trainable parameter blocks in a fixed order.
pub trait Parameters<T> {
    fn blocks(&self) -> Vec<&[T]>;
    fn blocks_mut(&mut self) -> Vec<&mut [T]>;

    fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Elementwise `self += other`. Both sides must share a layout.
    fn add_assign(&mut self, other: &Self)
    where
        T: Real,
    {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }
}

/// Uniform in `±1/sqrt(fan_in)`.
pub(crate) fn fan_in_uniform<T: Real, D: Dimension, Sh: ShapeBuilder<Dim = D>, R: Rng + ?Sized>(
    shape: Sh,
    fan_in: usize,
    rng: &mut R,
) -> Array<T, D> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array::from_shape_simple_fn(shape, || T::from_f64(rng.random_range(-bound..bound)))
}

pub(crate) fn slice_of<T, D: Dimension>(a: &Array<T, D>) -> &[T] {
    a.as_slice().expect("parameters are stored contiguously")
}

pub(crate) fn slice_of_mut<T, D: Dimension>(a: &mut Array<T, D>) -> &mut [T] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}
