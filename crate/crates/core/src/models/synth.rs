use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Example;
use crate::encoding::WordSequence;
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Stream};

const ROW_TOL: f64 = 1e-9;

/// Markov-chain sentences whose class lives in word order only.
///
/// The vocabulary is cut into groups of `group` words. Each class walks a
/// class-specific cycle inside every group and, with probability `noise`,
/// jumps to a uniformly random word. Every transition matrix is doubly
/// stochastic, so all classes share the uniform stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub vocab: usize,
    pub mean_len: f64,
    pub min_len: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub group: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            vocab: 50,
            mean_len: 32.0,
            min_len: 4,
            train_per_class: 200,
            test_per_class: 50,
            group: 5,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.vocab == 0 || self.group == 0 {
            return Err(Error::BadConfig("classes, vocab and group must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::BadConfig(format!("noise {} outside [0, 1]", self.noise)));
        }
        if !(self.mean_len.is_finite() && self.mean_len >= self.min_len as f64) || self.min_len == 0 {
            return Err(Error::BadConfig(format!(
                "mean length {} with minimum {}",
                self.mean_len, self.min_len
            )));
        }
        Ok(())
    }
}

/// Per-class `vocab x vocab` transition matrices over word indices
/// `0..vocab` (word id = index + 1).
pub fn class_transitions(cfg: &SyntheticConfig) -> Result<Vec<Array2<f64>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_616e);
    let v = cfg.vocab;
    let jump = cfg.noise / v as f64;
    let mut out = Vec::with_capacity(cfg.classes);
    for _ in 0..cfg.classes {
        let mut p = Array2::from_elem((v, v), jump);
        for start in (0..v).step_by(cfg.group) {
            let mut members: Vec<usize> = (start..(start + cfg.group).min(v)).collect();
            members.shuffle(&mut rng);
            for (i, &from) in members.iter().enumerate() {
                let to = members[(i + 1) % members.len()];
                p[[from, to]] += 1.0 - cfg.noise;
            }
        }
        out.push(p);
    }
    Ok(out)
}

fn check_stochastic(p: &Array2<f64>) -> Result<()> {
    if p.nrows() != p.ncols() {
        return Err(Error::ShapeMismatch(format!("transition matrix {:?}", p.dim())));
    }
    for (i, row) in p.rows().into_iter().enumerate() {
        let bad = row.iter().any(|&x| !(x.is_finite() && x >= 0.0));
        if bad || (row.sum() - 1.0).abs() > ROW_TOL {
            return Err(Error::NotStochastic(i));
        }
    }
    Ok(())
}

/// Left eigenvector for eigenvalue 1 by power iteration from uniform.
pub fn stationary_distribution(p: &Array2<f64>) -> Result<Array1<f64>> {
    check_stochastic(p)?;
    let n = p.nrows();
    let mut pi = Array1::from_elem(n, 1.0 / n as f64);
    for _ in 0..10_000 {
        let next = p.t().dot(&pi);
        let delta = (&next - &pi).iter().map(|d| d.abs()).sum::<f64>();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(pi)
}

/// Samples sentences from explicit transition matrices. All matrices must be
/// row-stochastic and share one stationary distribution, which also serves
/// as the initial distribution.
pub fn generate_from_transitions(
    transitions: &[Array2<f64>],
    cfg: &SyntheticConfig,
) -> Result<(Vec<Example>, Vec<Example>)> {
    cfg.validate()?;
    if transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for p in transitions {
        check_stochastic(p)?;
        if p.nrows() != transitions[0].nrows() {
            return Err(Error::ShapeMismatch("transition matrices differ in size".into()));
        }
    }
    let pi = stationary_distribution(&transitions[0])?;
    for p in transitions {
        let moved = p.t().dot(&pi);
        if (&moved - &pi).iter().any(|d| d.abs() > 1e-9) {
            return Err(Error::StationaryMismatch);
        }
    }

    let init = WeightedIndex::new(pi.iter().map(|&x| x.max(0.0))).map_err(|e| Error::BadConfig(e.to_string()))?;
    let rows: Vec<Vec<WeightedIndex<f64>>> = transitions
        .iter()
        .map(|p| {
            p.rows()
                .into_iter()
                .map(|r| WeightedIndex::new(r.iter().copied()).expect("validated row"))
                .collect()
        })
        .collect();
    let extra = cfg.mean_len - cfg.min_len as f64;
    let lengths = if extra > 0.0 {
        Some(Poisson::new(extra).map_err(|e| Error::BadConfig(e.to_string()))?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sample = |class: usize, split: &str, i: usize, rng: &mut ChaCha8Rng| {
        let len = cfg.min_len + lengths.as_ref().map_or(0, |d| d.sample(rng) as usize);
        let mut state = init.sample(rng);
        let mut ids = Vec::with_capacity(len);
        for _ in 0..len {
            ids.push(state + 1);
            state = rows[class][state].sample(rng);
        }
        Example {
            video_id: format!("c{class}_{split}_{i:04}"),
            label: class,
            words: WordSequence::new(ids),
        }
    };
    let mut train = Vec::with_capacity(transitions.len() * cfg.train_per_class);
    let mut test = Vec::with_capacity(transitions.len() * cfg.test_per_class);
    for class in 0..transitions.len() {
        for i in 0..cfg.train_per_class {
            train.push(sample(class, "train", i, &mut rng));
        }
        for i in 0..cfg.test_per_class {
            test.push(sample(class, "test", i, &mut rng));
        }
    }
    Ok((train, test))
}

pub fn generate_synthetic_dataset(cfg: &SyntheticConfig) -> Result<(Vec<Example>, Vec<Example>)> {
    generate_from_transitions(&class_transitions(cfg)?, cfg)
}

/// Turns word sentences into frame features: each word gets a random
/// prototype vector and every frame is its prototype plus Gaussian noise.
pub fn render_features(
    examples: &[Example],
    vocab: usize,
    dim: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<FeatureSequence>> {
    if dim == 0 || vocab == 0 {
        return Err(Error::BadConfig("feature dimension and vocabulary must be positive".into()));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::BadConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = Array2::from_shape_simple_fn((vocab, dim), || rng.sample::<f64, _>(StandardNormal));
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let words: Vec<usize> = ex.words.ids.iter().copied().filter(|&id| id != 0).collect();
        let mut frames = Array2::zeros((words.len(), dim));
        for (t, &id) in words.iter().enumerate() {
            if id > vocab {
                return Err(Error::UnknownWordId { id, vocab: vocab + 1 });
            }
            for c in 0..dim {
                frames[[t, c]] = (prototypes[[id - 1, c]] + noise.sample(&mut rng)) as f32;
            }
        }
        out.push(FeatureSequence::new(ex.video_id.clone(), ex.label, Stream::Fused, frames)?);
    }
    Ok(out)
}
