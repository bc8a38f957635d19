use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::{fan_in_uniform, slice_of, slice_of_mut, Parameters, Real};
use crate::error::{Error, Result};

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: fan_in_uniform((out_dim, in_dim), in_dim, rng),
            bias: fan_in_uniform(out_dim, in_dim, rng),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        Ok(self.weight.dot(&x) + &self.bias)
    }

    /// Adds parameter gradients into `grads`; returns `dL/dx`.
    pub fn backward(&self, x: ArrayView1<'_, T>, dy: ArrayView1<'_, T>, grads: &mut Dense<T>) -> Array1<T> {
        let outer = dy.insert_axis(Axis(1)).dot(&x.insert_axis(Axis(0)));
        grads.weight += &outer;
        grads.bias += &dy;
        self.weight.t().dot(&dy)
    }
}

impl<T> Parameters<T> for Dense<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![slice_of(&self.weight), slice_of(&self.bias)]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![slice_of_mut(&mut self.weight), slice_of_mut(&mut self.bias)]
    }
}
