use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, Example};
use crate::encoding::WordSequence;
use crate::error::{Error, Result};
use crate::nn::Real;

/// Number of observation fractions on a prediction curve (10%, 20%, ...).
pub const CURVE_POINTS: usize = 10;

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax<T: Real>(p: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// First `tenths / 10` of the real words (half-up rounding, at least one
/// word), padded or truncated to `l_max`.
pub fn prefix(seq: &WordSequence, tenths: usize, l_max: usize) -> Result<WordSequence> {
    if !(1..=CURVE_POINTS).contains(&tenths) {
        return Err(Error::BadConfig(format!("prefix tenths must be in 1..=10, got {tenths}")));
    }
    let real = seq.real_len();
    let keep = ((tenths * real + 5) / 10).max(1).min(real.max(1));
    let kept = WordSequence::new(seq.ids[..keep.min(seq.len())].to_vec());
    Ok(kept.pad_or_truncate(l_max))
}

pub fn predict<T: Real, M: Classifier<T>>(model: &M, seq: &WordSequence) -> Result<(usize, Array1<T>)> {
    let probs = model.probabilities(seq, None)?;
    Ok((argmax(probs.view()), probs))
}

fn accuracy_at<T: Real, M: Classifier<T>>(model: &M, set: &[Example], tenths: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits: Vec<Result<bool>> = set
        .par_iter()
        .map(|ex| {
            let seq = prefix(&ex.words, tenths, model.l_max())?;
            Ok(predict(model, &seq)?.0 == ex.label)
        })
        .collect();
    let mut correct = 0usize;
    for h in hits {
        correct += usize::from(h?);
    }
    Ok(correct as f64 / set.len() as f64)
}

pub fn recognition_accuracy<T: Real, M: Classifier<T>>(model: &M, set: &[Example]) -> Result<f64> {
    accuracy_at(model, set, CURVE_POINTS)
}

/// Accuracy when only the leading 10%, 20%, ..., 100% of each sentence is seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCurve {
    pub accuracy: [f64; CURVE_POINTS],
}

impl PredictionCurve {
    pub fn fractions() -> [f64; CURVE_POINTS] {
        std::array::from_fn(|i| (i + 1) as f64 / CURVE_POINTS as f64)
    }

    /// Accuracy at `tenths / 10` of the sentence.
    pub fn at(&self, tenths: usize) -> f64 {
        self.accuracy[tenths - 1]
    }

    pub fn full(&self) -> f64 {
        self.accuracy[CURVE_POINTS - 1]
    }
}

pub fn prediction_curve<T: Real, M: Classifier<T>>(model: &M, set: &[Example]) -> Result<PredictionCurve> {
    let mut accuracy = [0.0; CURVE_POINTS];
    for (i, slot) in accuracy.iter_mut().enumerate() {
        *slot = accuracy_at(model, set, i + 1)?;
    }
    Ok(PredictionCurve { accuracy })
}
