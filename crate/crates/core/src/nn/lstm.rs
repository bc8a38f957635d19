use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{fan_in_uniform, slice_of, slice_of_mut, Parameters, Real};
use crate::error::{Error, Result};

/// Single LSTM layer. Gate blocks inside the `4H` rows are ordered input,
/// forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub w_input: Array2<T>,
    pub w_hidden: Array2<T>,
    pub bias: Array1<T>,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    inputs: Array2<T>,
    hidden: Array2<T>,
    cells: Array2<T>,
    gates: Array2<T>,
}

impl<T> LstmCache<T> {
    /// Hidden states, one row per time step.
    pub fn hidden(&self) -> &Array2<T> {
        &self.hidden
    }

    pub fn cells(&self) -> &Array2<T> {
        &self.cells
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Lstm<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = in_dim + hidden;
        Self {
            w_input: fan_in_uniform((4 * hidden, in_dim), fan_in, rng),
            w_hidden: fan_in_uniform((4 * hidden, hidden), fan_in, rng),
            bias: fan_in_uniform(4 * hidden, fan_in, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden, in_dim)),
            w_hidden: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden_size())
    }

    pub fn in_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.ncols()
    }

    /// Activated gates `[i, f, o, g]` for one step.
    fn gates(&self, x: ArrayView1<'_, T>, h_prev: ArrayView1<'_, T>) -> Array1<T> {
        let h = self.hidden_size();
        let mut z = self.w_input.dot(&x) + self.w_hidden.dot(&h_prev) + &self.bias;
        for (k, v) in z.iter_mut().enumerate() {
            *v = if k < 3 * h { sigmoid(*v) } else { v.tanh() };
        }
        z
    }

    /// One step: returns `(h_t, c_t)`.
    pub fn cell_forward(
        &self,
        x: ArrayView1<'_, T>,
        h_prev: ArrayView1<'_, T>,
        c_prev: ArrayView1<'_, T>,
    ) -> Result<(Array1<T>, Array1<T>)> {
        if x.len() != self.in_dim() {
            return Err(Error::DimMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let h = self.hidden_size();
        if h_prev.len() != h || c_prev.len() != h {
            return Err(Error::DimMismatch {
                expected: h,
                got: h_prev.len().max(c_prev.len()),
            });
        }
        let gates = self.gates(x, h_prev);
        let (c, h_t) = Self::combine(&gates, c_prev, h);
        Ok((h_t, c))
    }

    fn combine(gates: &Array1<T>, c_prev: ArrayView1<'_, T>, h: usize) -> (Array1<T>, Array1<T>) {
        let i = gates.slice(s![..h]);
        let f = gates.slice(s![h..2 * h]);
        let o = gates.slice(s![2 * h..3 * h]);
        let g = gates.slice(s![3 * h..]);
        let c = &f * &c_prev + &i * &g;
        let h_t = &o * &c.mapv(T::tanh);
        (c, h_t)
    }

    /// Runs the layer over `inputs` (one row per time step) from zero state.
    pub fn forward_sequence(&self, inputs: ArrayView2<'_, T>) -> Result<LstmCache<T>> {
        if inputs.ncols() != self.in_dim() {
            return Err(Error::DimMismatch {
                expected: self.in_dim(),
                got: inputs.ncols(),
            });
        }
        let steps = inputs.nrows();
        let h = self.hidden_size();
        let mut hidden = Array2::zeros((steps, h));
        let mut cells = Array2::zeros((steps, h));
        let mut gates = Array2::zeros((steps, 4 * h));
        let mut h_prev = Array1::zeros(h);
        let mut c_prev = Array1::zeros(h);
        for t in 0..steps {
            let g = self.gates(inputs.row(t), h_prev.view());
            let (c, h_t) = Self::combine(&g, c_prev.view(), h);
            hidden.row_mut(t).assign(&h_t);
            cells.row_mut(t).assign(&c);
            gates.row_mut(t).assign(&g);
            h_prev = h_t;
            c_prev = c;
        }
        Ok(LstmCache {
            inputs: inputs.to_owned(),
            hidden,
            cells,
            gates,
        })
    }

    /// Backpropagation through time. `d_hidden` holds the upstream gradient
    /// for every step's hidden state; returns the input gradients.
    pub fn backward_sequence(
        &self,
        cache: &LstmCache<T>,
        d_hidden: ArrayView2<'_, T>,
        grads: &mut Lstm<T>,
    ) -> Array2<T> {
        let steps = cache.hidden.nrows();
        let h = self.hidden_size();
        let mut d_inputs = Array2::zeros((steps, self.in_dim()));
        let mut dh_next = Array1::<T>::zeros(h);
        let mut dc_next = Array1::<T>::zeros(h);
        let zeros = Array1::<T>::zeros(h);
        let one = T::one();

        for t in (0..steps).rev() {
            let gates = cache.gates.row(t);
            let i = gates.slice(s![..h]);
            let f = gates.slice(s![h..2 * h]);
            let o = gates.slice(s![2 * h..3 * h]);
            let g = gates.slice(s![3 * h..]);
            let c = cache.cells.row(t);
            let (c_prev, h_prev) = if t > 0 {
                (cache.cells.row(t - 1), cache.hidden.row(t - 1))
            } else {
                (zeros.view(), zeros.view())
            };

            let dh = &d_hidden.row(t) + &dh_next;
            let tanh_c = c.mapv(T::tanh);
            let dc = &dc_next + &(&dh * &o * &tanh_c.mapv(|v| one - v * v));

            let mut dz = Array1::zeros(4 * h);
            for k in 0..h {
                dz[k] = dc[k] * g[k] * i[k] * (one - i[k]);
                dz[h + k] = dc[k] * c_prev[k] * f[k] * (one - f[k]);
                dz[2 * h + k] = dh[k] * tanh_c[k] * o[k] * (one - o[k]);
                dz[3 * h + k] = dc[k] * i[k] * (one - g[k] * g[k]);
            }

            let dz_col = dz.view().insert_axis(Axis(1));
            grads.w_input += &dz_col.dot(&cache.inputs.row(t).insert_axis(Axis(0)));
            grads.w_hidden += &dz_col.dot(&h_prev.insert_axis(Axis(0)));
            grads.bias += &dz;

            d_inputs.row_mut(t).assign(&self.w_input.t().dot(&dz));
            dh_next = self.w_hidden.t().dot(&dz);
            dc_next = &dc * &f;
        }
        d_inputs
    }
}

impl<T> Parameters<T> for Lstm<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![slice_of(&self.w_input), slice_of(&self.w_hidden), slice_of(&self.bias)]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            slice_of_mut(&mut self.w_input),
            slice_of_mut(&mut self.w_hidden),
            slice_of_mut(&mut self.bias),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_parameters_give_zero_hidden() {
        let layer = Lstm::<f64>::zeros(3, 4);
        let x = Array1::from_elem(3, 0.7);
        let c_prev = Array1::from_elem(4, 0.3);
        let (h, _) = layer.cell_forward(x.view(), Array1::zeros(4).view(), c_prev.view()).unwrap();
        let (h0, _) = layer
            .cell_forward(x.view(), Array1::zeros(4).view(), Array1::zeros(4).view())
            .unwrap();
        assert!(h0.iter().all(|&v| v == 0.0));
        assert!(h.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut layer = Lstm::<f64>::zeros(2, 3);
        layer.bias.slice_mut(s![3..6]).fill(20.0);
        let c_prev = Array1::from_vec(vec![0.4, -1.2, 2.5]);
        let h_prev = Array1::from_vec(vec![0.1, 0.2, -0.3]);
        let x = Array1::from_vec(vec![5.0, -3.0]);
        let (_, c) = layer.cell_forward(x.view(), h_prev.view(), c_prev.view()).unwrap();
        for (a, b) in c.iter().zip(c_prev.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn step_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = Lstm::<f64>::new(3, 2, &mut rng);
        let x = [0.3, -0.8, 1.1];
        let h_prev = [0.2, -0.5];
        let c_prev = [1.0, -0.4];
        let (h, c) = layer
            .cell_forward(
                ArrayView1::from(&x[..]),
                ArrayView1::from(&h_prev[..]),
                ArrayView1::from(&c_prev[..]),
            )
            .unwrap();
        let mut z = [0.0; 8];
        for r in 0..8 {
            z[r] = layer.bias[r];
            for k in 0..3 {
                z[r] += layer.w_input[[r, k]] * x[k];
            }
            for k in 0..2 {
                z[r] += layer.w_hidden[[r, k]] * h_prev[k];
            }
        }
        for u in 0..2 {
            let i = scalar_sigmoid(z[u]);
            let f = scalar_sigmoid(z[2 + u]);
            let o = scalar_sigmoid(z[4 + u]);
            let g = z[6 + u].tanh();
            let c_exp = f * c_prev[u] + i * g;
            let h_exp = o * c_exp.tanh();
            assert!((c[u] - c_exp).abs() < 1e-12);
            assert!((h[u] - h_exp).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_state_growth_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = Lstm::<f64>::new(4, 5, &mut rng);
        let inputs = Array2::from_shape_simple_fn((30, 4), || rng.random_range(-3.0..3.0));
        let cache = layer.forward_sequence(inputs.view()).unwrap();
        let mut prev = Array1::<f64>::zeros(5);
        for row in cache.cells().rows() {
            for (c, p) in row.iter().zip(prev.iter()) {
                assert!(c.abs() <= p.abs() + 1.0);
            }
            prev = row.to_owned();
        }
    }
}
