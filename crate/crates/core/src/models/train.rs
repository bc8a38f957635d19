use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{argmax, recognition_accuracy};
use super::{check_label, Classifier, Example};
use crate::error::{Error, Result};
use crate::nn::{Real, RmsProp};

/// Samples per work unit inside a batch. Gradients are summed within a unit
/// and then across units in a fixed order, so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub train_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 100,
            learning_rate: 1e-4,
            seed: 0,
            train_embeddings: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::BadConfig("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::BadConfig(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's training-mode passes.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, epoch: usize, position: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ position as u64)
}

struct ChunkResult<M> {
    grads: M,
    loss: f64,
    correct: usize,
}

/// Mini-batch RMSProp on cross-entropy. Returns one entry per epoch.
pub fn train<T: Real, M: Classifier<T>>(
    model: &mut M,
    train_set: &[Example],
    val_set: Option<&[Example]>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in train_set.iter().chain(val_set.unwrap_or(&[])) {
        check_label(ex.label, model.num_classes())?;
    }

    let mut optimizer = RmsProp::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x5348_5546));
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let scale = T::from_f64(1.0 / batch.len() as f64);
            let base = b * cfg.batch_size;
            let model_ref = &*model;
            let parts: Vec<Result<ChunkResult<M>>> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut grads = model_ref.zero_grads();
                    let mut loss = 0.0;
                    let mut hits = 0;
                    for (i, &idx) in chunk.iter().enumerate() {
                        let ex = &train_set[idx];
                        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch, base + c * CHUNK + i));
                        let (l, probs) = model_ref.accumulate_gradient(
                            &ex.words,
                            ex.label,
                            Some(&mut rng),
                            scale,
                            cfg.train_embeddings,
                            &mut grads,
                        )?;
                        loss += l.to_f64();
                        hits += usize::from(argmax(probs.view()) == ex.label);
                    }
                    Ok(ChunkResult {
                        grads,
                        loss,
                        correct: hits,
                    })
                })
                .collect();

            let mut total: Option<M> = None;
            for part in parts {
                let part = part?;
                loss_sum += part.loss;
                correct += part.correct;
                match total.as_mut() {
                    Some(t) => t.add_assign(&part.grads),
                    None => total = Some(part.grads),
                }
            }
            if let Some(grads) = total {
                optimizer.step(model, &grads);
            }
        }

        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let val_acc = match val_set {
            Some(v) if !v.is_empty() => Some(recognition_accuracy(&*model, v)?),
            _ => None,
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            train_acc: correct as f64 / train_set.len() as f64,
            val_acc,
        });
    }
    Ok(history)
}
