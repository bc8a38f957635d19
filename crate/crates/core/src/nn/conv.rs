use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{fan_in_uniform, slice_of, slice_of_mut, Parameters, Real};
use crate::error::{Error, Result};

/// Valid (unpadded) temporal cross-correlation.
///
/// `weight` is `filters x (width * in_dim)`; entry `[f, tau * in_dim + c]`
/// multiplies input channel `c` at offset `tau` inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    width: usize,
    in_dim: usize,
}

/// Unfolded input windows kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv1dCache<T> {
    patches: Array2<T>,
    time: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(filters: usize, width: usize, in_dim: usize, rng: &mut R) -> Self {
        let fan_in = width * in_dim;
        Self {
            weight: fan_in_uniform((filters, fan_in), fan_in, rng),
            bias: fan_in_uniform(filters, fan_in, rng),
            width,
            in_dim,
        }
    }

    pub fn zeros(filters: usize, width: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((filters, width * in_dim)),
            bias: Array1::zeros(filters),
            width,
            in_dim,
        }
    }

    pub fn from_parts(weight: Array2<T>, bias: Array1<T>, width: usize) -> Result<Self> {
        if width == 0 || weight.ncols() % width != 0 || weight.nrows() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "conv weight {:?} with bias {} and width {width}",
                weight.dim(),
                bias.len()
            )));
        }
        let in_dim = weight.ncols() / width;
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
            width,
            in_dim,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.filters(), self.width, self.in_dim)
    }

    pub fn filters(&self) -> usize {
        self.weight.nrows()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn output_len(&self, time: usize) -> Result<usize> {
        if time < self.width {
            return Err(Error::WindowTooLarge {
                window: self.width,
                len: time,
            });
        }
        Ok(time - self.width + 1)
    }

    /// `input` is `in_dim x time`; the result is `filters x (time - width + 1)`.
    pub fn forward(&self, input: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: ArrayView2<'_, T>) -> Result<(Array2<T>, Conv1dCache<T>)> {
        if input.nrows() != self.in_dim {
            return Err(Error::DimMismatch {
                expected: self.in_dim,
                got: input.nrows(),
            });
        }
        let time = input.ncols();
        let out_len = self.output_len(time)?;
        let d = self.in_dim;
        let mut patches = Array2::zeros((self.width * d, out_len));
        for tau in 0..self.width {
            patches
                .slice_mut(s![tau * d..(tau + 1) * d, ..])
                .assign(&input.slice(s![.., tau..tau + out_len]));
        }
        let mut out = self.weight.dot(&patches);
        out += &self.bias.view().insert_axis(Axis(1));
        Ok((out, Conv1dCache { patches, time }))
    }

    /// Adds the parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &Conv1dCache<T>, d_out: ArrayView2<'_, T>, grads: &mut Conv1d<T>) -> Array2<T> {
        grads.weight += &d_out.dot(&cache.patches.t());
        grads.bias += &d_out.sum_axis(Axis(1));

        let d_patches = self.weight.t().dot(&d_out);
        let d = self.in_dim;
        let out_len = d_out.ncols();
        let mut d_input = Array2::zeros((d, cache.time));
        for tau in 0..self.width {
            let mut dst = d_input.slice_mut(s![.., tau..tau + out_len]);
            dst += &d_patches.slice(s![tau * d..(tau + 1) * d, ..]);
        }
        d_input
    }
}

impl<T> Parameters<T> for Conv1d<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![slice_of(&self.weight), slice_of(&self.bias)]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![slice_of_mut(&mut self.weight), slice_of_mut(&mut self.bias)]
    }
}
