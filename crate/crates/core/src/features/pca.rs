use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A fitted principal component basis.
///
/// Rows of `components` are orthonormal and ordered by descending explained
/// variance. No whitening is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    components: Array2<f64>,
    explained_variance: Array1<f64>,
}

/// Fits PCA on `features` (one sample per row) keeping `out_dim` components.
///
/// The basis comes from a symmetric eigendecomposition of the sample
/// covariance (normalised by `n - 1`). Each component's sign is fixed so that
/// its largest-magnitude coordinate is positive.
pub fn pca_fit(features: ArrayView2<'_, f64>, out_dim: usize) -> Result<PcaModel> {
    let (n, dim) = features.dim();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let bound = dim.min(n);
    if out_dim == 0 || out_dim > bound {
        return Err(Error::DimTooLarge {
            requested: out_dim,
            bound,
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mean = features.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &features - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let cov = DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite covariance")
            .then(a.cmp(&b))
    });

    let mut components = Array2::zeros((out_dim, dim));
    let mut explained_variance = Array1::zeros(out_dim);
    for (row, &src) in order.iter().take(out_dim).enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = (0..dim)
            .max_by(|&a, &b| col[a].abs().partial_cmp(&col[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..dim {
            components[[row, c]] = sign * col[c];
        }
        explained_variance[row] = eig.eigenvalues[src].max(0.0);
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &Array1<f64> {
        &self.explained_variance
    }

    /// Rebuilds a model from stored parts, checking shapes.
    pub fn from_parts(
        mean: Array1<f64>,
        components: Array2<f64>,
        explained_variance: Array1<f64>,
    ) -> Result<Self> {
        if components.ncols() != mean.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                got: components.ncols(),
            });
        }
        if explained_variance.len() != components.nrows() {
            return Err(Error::DimMismatch {
                expected: components.nrows(),
                got: explained_variance.len(),
            });
        }
        Ok(Self {
            mean,
            components,
            explained_variance,
        })
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.project_leading(x, self.num_components())
    }

    /// The first `n` projected coordinates.
    pub fn project_leading(&self, x: ArrayView1<'_, f64>, n: usize) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if n > self.num_components() {
            return Err(Error::DimTooLarge {
                requested: n,
                bound: self.num_components(),
            });
        }
        let centered = &x - &self.mean;
        Ok(self.components.slice(ndarray::s![..n, ..]).dot(&centered))
    }

    /// Maps projected coordinates back to input space.
    pub fn reconstruct(&self, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let k = y.len();
        if k > self.num_components() {
            return Err(Error::DimMismatch {
                expected: self.num_components(),
                got: k,
            });
        }
        Ok(self.components.slice(ndarray::s![..k, ..]).t().dot(&y) + &self.mean)
    }
}
