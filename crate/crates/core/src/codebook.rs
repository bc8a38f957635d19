//! K-means codebook over frame features.
//!
//! Seeding is k-means++; refinement is exact Lloyd iteration. The assignment
//! step runs in parallel over points, while every reduction walks points in
//! input order so the result does not depend on the thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Array2<f64>,
    distortion: f64,
    seed: u64,
    history: Vec<f64>,
}

impl Codebook {
    /// Wraps existing centroids, e.g. ones read back from disk.
    pub fn from_centroids(centroids: Array2<f64>, distortion: f64, seed: u64) -> Result<Self> {
        if centroids.nrows() == 0 || centroids.ncols() == 0 {
            return Err(Error::BadConfig("codebook needs K >= 1 and dim >= 1".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            centroids,
            distortion,
            seed,
            history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> ArrayView1<'_, f64> {
        self.centroids.row(i)
    }

    /// Final mean squared distance from the training points to their centroid.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Mean distortion after each Lloyd assignment step.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Index of the closest centroid and its squared distance. Ties go to the
    /// lowest index.
    pub fn nearest(&self, x: ArrayView1<'_, f64>) -> Result<(usize, f64)> {
        self.check_dim(x.len())?;
        Ok(nearest_row(self.centroids.view(), x))
    }

    /// Squared distances from `x` to every centroid.
    pub fn squared_distances(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(x.len())?;
        Ok(self
            .centroids
            .rows()
            .into_iter()
            .map(|c| squared_distance(c, x))
            .collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

pub fn nearest_codeword(cb: &Codebook, x: ArrayView1<'_, f64>) -> Result<(usize, f64)> {
    cb.nearest(x)
}

pub(crate) fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn nearest_row(rows: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in rows.rows().into_iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Fits a `k`-word codebook on `features` (one sample per row).
pub fn kmeans_fit(features: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<Codebook> {
    let n = features.nrows();
    if cfg.k == 0 {
        return Err(Error::BadConfig("K must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::TooFewSamples { samples: n, k: cfg.k });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_plus_plus(features, cfg.k, &mut rng)?;
    let mut history = Vec::new();
    let mut assignment = vec![0usize; n];

    for iter in 0..cfg.max_iter.max(1) {
        let nearest: Vec<(usize, f64)> = features
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|x| nearest_row(centroids.view(), x))
            .collect();
        let distortion = nearest.iter().map(|&(_, d)| d).sum::<f64>() / n as f64;
        if let Some(&prev) = history.last() {
            debug_assert!(
                distortion <= prev * (1.0 + 1e-12) + 1e-300,
                "distortion rose from {prev} to {distortion}"
            );
        }
        for (a, &(i, _)) in assignment.iter_mut().zip(&nearest) {
            *a = i;
        }
        history.push(distortion);

        let converged = match history.len() {
            0 | 1 => distortion == 0.0,
            len => {
                let prev = history[len - 2];
                distortion == 0.0 || (prev - distortion) <= cfg.rel_tol * prev
            }
        };
        if converged || iter + 1 == cfg.max_iter.max(1) {
            break;
        }

        update_centroids(features, &assignment, &mut centroids);
    }

    let distortion = *history.last().expect("at least one iteration");
    Ok(Codebook {
        centroids,
        distortion,
        seed: cfg.seed,
        history,
    })
}

fn kmeans_plus_plus(features: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let n = features.nrows();
    let mut centroids = Array2::zeros((k, features.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&features.row(first));

    let mut closest: Vec<f64> = features
        .rows()
        .into_iter()
        .map(|x| squared_distance(x, features.row(first)))
        .collect();

    for c in 1..k {
        let total: f64 = closest.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateData { k });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in closest.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            if acc > target {
                chosen = Some(i);
                break;
            }
        }
        // Rounding can leave `acc` just short of `target`; fall back to the
        // last point with positive weight.
        let chosen = chosen.unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap());
        centroids.row_mut(c).assign(&features.row(chosen));
        for (i, x) in features.rows().into_iter().enumerate() {
            let d = squared_distance(x, centroids.row(c));
            if d < closest[i] {
                closest[i] = d;
            }
        }
    }
    Ok(centroids)
}

/// Replaces each centroid by the mean of its points. An empty cluster is
/// moved onto the point farthest from its updated centroid.
fn update_centroids(features: ArrayView2<'_, f64>, assignment: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (x, &a) in features.rows().into_iter().zip(assignment) {
        let mut row = sums.row_mut(a);
        row += &x;
        counts[a] += 1;
    }
    let mut empty = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        } else {
            empty.push(c);
        }
    }
    if empty.is_empty() {
        return;
    }
    let mut spread: Vec<(usize, f64)> = features
        .rows()
        .into_iter()
        .zip(assignment)
        .enumerate()
        .map(|(i, (x, &a))| (i, squared_distance(x, centroids.row(a))))
        .collect();
    // Farthest first; ties by lowest index.
    spread.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (c, &(i, _)) in empty.iter().zip(&spread) {
        centroids.row_mut(*c).assign(&features.row(i));
    }
}
