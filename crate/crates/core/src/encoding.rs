//! Frame feature → ActionWord assignment and word embedding.
//!
//! Word id 0 is the pad word and always embeds to the zero vector. Hard
//! assignment uses ids `1..=K` (centroid `i` is id `i + 1`); soft and direct
//! assignment hand out fresh sequential ids from a [`WordRegistry`].

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::nn::Real;

pub const PAD_ID: usize = 0;

/// Half-width of the uniform range used for random embedding rows.
pub const RANDOM_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub word_id: usize,
    pub weight: Array1<f64>,
}

/// Soft-assignment parameters: neighbour count and kernel sharpness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaConfig {
    pub k: usize,
    pub beta: f64,
}

impl SaConfig {
    pub fn new(k: usize, beta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::BadConfig("soft assignment needs k >= 1".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::BadConfig(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { k, beta })
    }
}

/// `1 / (2m)` where `m` is the codebook's mean squared assignment distance.
pub fn default_beta(cb: &Codebook) -> f64 {
    let m = cb.distortion();
    if m > 0.0 && m.is_finite() {
        1.0 / (2.0 * m)
    } else {
        1.0
    }
}

/// Sequential id allocator that remembers the weight vector of every id.
///
/// Single writer: callers encoding in parallel must serialise registration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordRegistry {
    weights: Vec<Array1<f64>>,
}

impl WordRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of ids handed out so far.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn register(&mut self, weight: Array1<f64>) -> Result<usize> {
        if let Some(first) = self.weights.first() {
            if first.len() != weight.len() {
                return Err(Error::InconsistentDim {
                    expected: first.len(),
                    got: weight.len(),
                });
            }
        }
        self.weights.push(weight);
        Ok(self.weights.len())
    }

    pub fn weight(&self, id: usize) -> Option<&Array1<f64>> {
        id.checked_sub(1).and_then(|i| self.weights.get(i))
    }
}

pub fn hard_assign(x: ArrayView1<'_, f64>, cb: &Codebook) -> Result<Assignment> {
    let (i, _) = cb.nearest(x)?;
    Ok(Assignment {
        word_id: i + 1,
        weight: cb.centroid(i).to_owned(),
    })
}

/// The `k` nearest centroid indices with their normalised kernel weights,
/// and the resulting weighted centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftWeights {
    pub neighbours: Vec<usize>,
    pub weights: Vec<f64>,
    pub centroid: Array1<f64>,
}

pub fn soft_weights(x: ArrayView1<'_, f64>, cb: &Codebook, cfg: &SaConfig) -> Result<SoftWeights> {
    if cfg.k > cb.k() {
        return Err(Error::KTooLarge {
            k: cfg.k,
            size: cb.k(),
        });
    }
    let dist = cb.squared_distances(x)?;
    let mut order: Vec<usize> = (0..cb.k()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(cfg.k);

    // Shifting by the smallest distance leaves the normalised weights
    // unchanged and keeps the exponentials in range.
    let d_min = dist[order[0]];
    let kernel: Vec<f64> = order
        .iter()
        .map(|&j| (-cfg.beta * (dist[j] - d_min)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let weights: Vec<f64> = kernel.iter().map(|w| w / total).collect();

    let mut centroid = Array1::zeros(cb.dim());
    for (&j, &w) in order.iter().zip(&weights) {
        centroid.scaled_add(w, &cb.centroid(j));
    }
    Ok(SoftWeights {
        neighbours: order,
        weights,
        centroid,
    })
}

pub fn soft_assign(
    x: ArrayView1<'_, f64>,
    cb: &Codebook,
    cfg: &SaConfig,
    registry: &mut WordRegistry,
) -> Result<Assignment> {
    let sw = soft_weights(x, cb, cfg)?;
    let word_id = registry.register(sw.centroid.clone())?;
    Ok(Assignment {
        word_id,
        weight: sw.centroid,
    })
}

pub fn direct_assign(x: ArrayView1<'_, f64>, registry: &mut WordRegistry) -> Result<Assignment> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let weight = x.to_owned();
    let word_id = registry.register(weight.clone())?;
    Ok(Assignment { word_id, weight })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Rows are the codebook centroids.
    Codeword,
    /// Rows drawn uniformly from `[-0.05, 0.05]`.
    Random,
    /// Rows are the weight vectors recorded at assignment time.
    Direct,
}

/// Word id → weight vector lookup. Row 0 is the pad word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    rows: Array2<T>,
    init_mode: InitMode,
}

impl<T: Real> EmbeddingTable<T> {
    pub fn from_codebook(cb: &Codebook) -> Self {
        let mut rows = Array2::zeros((cb.k() + 1, cb.dim()));
        for (i, c) in cb.centroids().rows().into_iter().enumerate() {
            rows.row_mut(i + 1).assign(&c.mapv(T::from_f64));
        }
        Self {
            rows,
            init_mode: InitMode::Codeword,
        }
    }

    /// `vocab_size` counts the pad row.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size < 1 || dim < 1 {
            return Err(Error::BadConfig("embedding table needs rows and columns".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Array2::zeros((vocab_size, dim));
        for mut row in rows.rows_mut().into_iter().skip(1) {
            for v in row.iter_mut() {
                *v = T::from_f64(rng.random_range(-RANDOM_INIT_RANGE..=RANDOM_INIT_RANGE));
            }
        }
        Ok(Self {
            rows,
            init_mode: InitMode::Random,
        })
    }

    pub fn from_registry(registry: &WordRegistry) -> Result<Self> {
        let dim = registry
            .weights
            .first()
            .map(Array1::len)
            .ok_or(Error::EmptyDataset)?;
        let mut rows = Array2::zeros((registry.len() + 1, dim));
        for (i, w) in registry.weights.iter().enumerate() {
            if w.len() != dim {
                return Err(Error::InconsistentDim {
                    expected: dim,
                    got: w.len(),
                });
            }
            rows.row_mut(i + 1).assign(&w.mapv(T::from_f64));
        }
        Ok(Self {
            rows,
            init_mode: InitMode::Direct,
        })
    }

    /// Wraps stored rows. Row 0 must be zero.
    pub fn from_rows(rows: Array2<T>, init_mode: InitMode) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::BadConfig("embedding table needs rows and columns".into()));
        }
        if rows.row(PAD_ID).iter().any(|v| *v != T::zero()) {
            return Err(Error::format("embedding table", "pad row is not zero"));
        }
        Ok(Self {
            rows: rows.as_standard_layout().into_owned(),
            init_mode,
        })
    }

    pub fn cast<U: Real>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            rows: self.rows.mapv(|v| U::from_f64(v.to_f64())),
            init_mode: self.init_mode,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn row(&self, id: usize) -> Result<ArrayView1<'_, T>> {
        if id >= self.vocab_size() {
            return Err(Error::UnknownWordId {
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(self.rows.row(id))
    }

    /// Mutable access for training. Callers must keep row 0 at zero.
    pub(crate) fn rows_mut(&mut self) -> &mut Array2<T> {
        &mut self.rows
    }
}

/// A video as a sentence of word ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordSequence {
    pub ids: Vec<usize>,
}

impl WordSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of leading real (non-pad) words.
    pub fn real_len(&self) -> usize {
        self.ids.iter().take_while(|&&id| id != PAD_ID).count()
    }

    /// Keeps the first `l_max` ids, padding the tail with the pad word.
    pub fn pad_or_truncate(&self, l_max: usize) -> WordSequence {
        let mut ids: Vec<usize> = self.ids.iter().copied().take(l_max).collect();
        ids.resize(l_max, PAD_ID);
        WordSequence { ids }
    }
}

pub fn pad_or_truncate(seq: &WordSequence, l_max: usize) -> WordSequence {
    seq.pad_or_truncate(l_max)
}

/// Looks up every id, giving a `dim x len` matrix whose column `t` is the
/// embedding of `ids[t]`.
pub fn embed<T: Real>(seq: &WordSequence, table: &EmbeddingTable<T>) -> Result<Array2<T>> {
    let mut omega = Array2::zeros((table.dim(), seq.len()));
    for (t, &id) in seq.ids.iter().enumerate() {
        omega.column_mut(t).assign(&table.row(id)?);
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn grid_codebook() -> Codebook {
        let cents = Array2::from_shape_fn((8, 2), |(i, j)| if j == 0 { i as f64 } else { (i * i) as f64 * 0.1 });
        Codebook::from_centroids(cents, 0.5, 0).unwrap()
    }

    fn random_codebook(k: usize, d: usize, seed: u64) -> Codebook {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cents = Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0));
        Codebook::from_centroids(cents, 0.3, seed).unwrap()
    }

    #[test]
    fn hard_assign_exact_match_shifts_id() {
        let cb = grid_codebook();
        let a = hard_assign(cb.centroid(5), &cb).unwrap();
        assert_eq!(a.word_id, 6);
        assert_eq!(a.weight, cb.centroid(5).to_owned());

        let two = Codebook::from_centroids(array![[0.0, 0.0], [1.0, 1.0]], 0.0, 0).unwrap();
        let a = hard_assign(array![0.1, 0.1].view(), &two).unwrap();
        assert_eq!(a.word_id, 1);
        assert_eq!(a.weight, array![0.0, 0.0]);
    }

    #[test]
    fn soft_k1_is_hard_assignment() {
        let cb = random_codebook(16, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut reg = WordRegistry::new();
        for _ in 0..50 {
            let x = Array1::from_shape_fn(4, |_| rng.random_range(-1.5..1.5));
            let beta = rng.random_range(0.01..100.0);
            let soft = soft_assign(x.view(), &cb, &SaConfig::new(1, beta).unwrap(), &mut reg).unwrap();
            let hard = hard_assign(x.view(), &cb).unwrap();
            assert_eq!(soft.weight, hard.weight);
        }
        assert_eq!(reg.len(), 50);
    }

    #[test]
    fn equidistant_pair_gives_midpoint() {
        let cb = Codebook::from_centroids(array![[-1.0, 0.0], [1.0, 0.0], [0.0, 5.0]], 0.0, 0).unwrap();
        let sw = soft_weights(array![0.0, 0.0].view(), &cb, &SaConfig::new(2, 0.7).unwrap()).unwrap();
        assert_eq!(sw.weights, vec![0.5, 0.5]);
        assert_eq!(sw.centroid, array![0.0, 0.0]);
    }

    /// Eqs. for the weighted centroid evaluated literally over all K
    /// centroids with a 0/1 neighbour indicator.
    fn literal_soft_weight(x: &Array1<f64>, cb: &Codebook, k: usize, beta: f64) -> Array1<f64> {
        let kk = cb.k();
        let d2: Vec<f64> = (0..kk)
            .map(|j| (0..cb.dim()).map(|c| (x[c] - cb.centroids()[[j, c]]).powi(2)).sum())
            .collect();
        let mut delta = vec![0.0; kk];
        for j in 0..kk {
            // Rank = number of centroids strictly closer (ties broken by index).
            let rank = (0..kk)
                .filter(|&i| d2[i] < d2[j] || (d2[i] == d2[j] && i < j))
                .count();
            if rank < k {
                delta[j] = 1.0;
            }
        }
        let denom: f64 = (0..kk).map(|j| delta[j] * (-beta * d2[j]).exp()).sum();
        let mut w = Array1::zeros(cb.dim());
        for j in 0..kk {
            let dw = delta[j] * (-beta * d2[j]).exp() / denom;
            for c in 0..cb.dim() {
                w[c] += delta[j] * cb.centroids()[[j, c]] * dw;
            }
        }
        w
    }

    #[test]
    fn soft_weight_matches_literal_formula() {
        let cb = random_codebook(32, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
            let sw = soft_weights(x.view(), &cb, &SaConfig::new(5, 1.0).unwrap()).unwrap();
            let oracle = literal_soft_weight(&x, &cb, 5, 1.0);
            for (a, b) in sw.centroid.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((sw.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_assign_errors() {
        let cb = random_codebook(4, 3, 6);
        let mut reg = WordRegistry::new();
        let x = Array1::zeros(3);
        assert!(matches!(
            soft_assign(x.view(), &cb, &SaConfig::new(5, 1.0).unwrap(), &mut reg),
            Err(Error::KTooLarge { k: 5, size: 4 })
        ));
        assert!(matches!(
            soft_assign(Array1::zeros(2).view(), &cb, &SaConfig::new(2, 1.0).unwrap(), &mut reg),
            Err(Error::DimMismatch { .. })
        ));
        assert!(SaConfig::new(0, 1.0).is_err());
        assert!(SaConfig::new(1, 0.0).is_err());
    }

    #[test]
    fn direct_assignment_ids() {
        let mut reg = WordRegistry::new();
        let zero = direct_assign(Array1::zeros(3).view(), &mut reg).unwrap();
        assert_ne!(zero.word_id, PAD_ID);
        assert_eq!(zero.weight, Array1::<f64>::zeros(3));

        let x = array![1.0, 2.0, 3.0];
        let a = direct_assign(x.view(), &mut reg).unwrap();
        let b = direct_assign(x.view(), &mut reg).unwrap();
        assert_ne!(a.word_id, b.word_id);
        assert_eq!(a.weight, b.weight);
        assert_eq!(reg.len(), 3);
        let table = EmbeddingTable::<f64>::from_registry(&reg).unwrap();
        assert_eq!(table.vocab_size(), 4);
        assert!(matches!(
            direct_assign(array![f64::NAN, 0.0, 0.0].view(), &mut reg),
            Err(Error::NonFiniteInput)
        ));
        assert!(matches!(
            direct_assign(array![1.0].view(), &mut reg),
            Err(Error::InconsistentDim { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn tables_in_each_mode() {
        let cb = random_codebook(4, 3, 7);
        let t = EmbeddingTable::<f64>::from_codebook(&cb);
        assert_eq!(t.vocab_size(), 5);
        assert!(t.row(0).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(t.row(3).unwrap(), cb.centroid(2));

        let r1 = EmbeddingTable::<f32>::random(20, 6, 99).unwrap();
        let r2 = EmbeddingTable::<f32>::random(20, 6, 99).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.row(0).unwrap().iter().all(|&v| v == 0.0));
        assert!(r1.rows().iter().all(|v| v.abs() <= 0.05));

        let mut reg = WordRegistry::new();
        let cfg = SaConfig::new(3, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut recorded = Vec::new();
        for _ in 0..10 {
            let x = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
            recorded.push(soft_assign(x.view(), &cb, &cfg, &mut reg).unwrap());
        }
        let t = EmbeddingTable::<f64>::from_registry(&reg).unwrap();
        assert_eq!(t.vocab_size(), 11);
        for (j, a) in recorded.iter().enumerate() {
            assert_eq!(a.word_id, j + 1);
            assert_eq!(t.row(j + 1).unwrap(), a.weight.view());
        }
    }

    #[test]
    fn pad_and_truncate() {
        let s = WordSequence::new(vec![3, 7]);
        assert_eq!(s.pad_or_truncate(4).ids, vec![3, 7, 0, 0]);
        let long = WordSequence::new((1..=10).collect());
        assert_eq!(long.pad_or_truncate(4).ids, vec![1, 2, 3, 4]);
        assert_eq!(s.pad_or_truncate(2), s);
        assert_eq!(s.pad_or_truncate(4).real_len(), 2);
    }

    #[test]
    fn embed_lookups() {
        let table = EmbeddingTable::<f64>::random(6, 3, 1).unwrap();
        let pad = WordSequence::new(vec![0; 4]);
        assert!(embed(&pad, &table).unwrap().iter().all(|&v| v == 0.0));
        let one = embed(&WordSequence::new(vec![1]), &table).unwrap();
        assert_eq!(one.column(0), table.row(1).unwrap());
        let seq = WordSequence::new(vec![5, 2, 2, 0, 1]);
        let omega = embed(&seq, &table).unwrap();
        assert_eq!(omega.dim(), (3, 5));
        for (t, &id) in seq.ids.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(omega[[c, t]], table.rows()[[id, c]]);
            }
        }
        assert!(matches!(
            embed(&WordSequence::new(vec![6]), &table),
            Err(Error::UnknownWordId { id: 6, vocab: 6 })
        ));
    }

    #[test]
    fn direct_embedding_reproduces_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let feats = Array2::from_shape_fn((7, 4), |_| rng.random_range(-3.0..3.0));
        let mut reg = WordRegistry::new();
        let ids = feats
            .rows()
            .into_iter()
            .map(|x| direct_assign(x, &mut reg).unwrap().word_id)
            .collect();
        let table = EmbeddingTable::<f64>::from_registry(&reg).unwrap();
        let omega = embed(&WordSequence::new(ids), &table).unwrap();
        assert_eq!(omega.t(), feats);
    }

    proptest! {
        #[test]
        fn soft_weights_are_convex(seed in any::<u64>(), k in 1usize..8, beta in 0.01f64..50.0) {
            let cb = random_codebook(8, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let x = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
            let sw = soft_weights(x.view(), &cb, &SaConfig::new(k, beta).unwrap()).unwrap();
            prop_assert!(sw.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((sw.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let mut rebuilt = Array1::<f64>::zeros(3);
            for (&j, &w) in sw.neighbours.iter().zip(&sw.weights) {
                rebuilt.scaled_add(w, &cb.centroid(j));
            }
            let residual = (&rebuilt - &sw.centroid).mapv(f64::abs).sum();
            prop_assert!(residual <= 1e-9);
        }

        #[test]
        fn padding_never_alters_real_columns(
            ids in proptest::collection::vec(1usize..6, 1..12),
            l_max in 1usize..16,
        ) {
            let table = EmbeddingTable::<f64>::random(6, 2, 3).unwrap();
            let seq = WordSequence::new(ids);
            let full = embed(&seq, &table).unwrap();
            let padded = embed(&seq.pad_or_truncate(l_max), &table).unwrap();
            prop_assert_eq!(padded.ncols(), l_max);
            let keep = seq.len().min(l_max);
            for t in 0..keep {
                prop_assert_eq!(padded.column(t), full.column(t));
            }
            for t in keep..l_max {
                prop_assert!(padded.column(t).iter().all(|&v| v == 0.0));
            }
        }
    }
}
