use ndarray::Array1;
use rayon::prelude::*;

use super::Example;
use crate::encoding::{WordSequence, PAD_ID};
use crate::error::{Error, Result};

/// Order-blind reference classifier: k-nearest neighbours (L1 distance) on
/// normalized bag-of-ids histograms, majority vote with ties to the lowest
/// class.
#[derive(Debug, Clone)]
pub struct HistogramKnn {
    k: usize,
    vocab: usize,
    classes: usize,
    points: Vec<(Array1<f64>, usize)>,
}

impl HistogramKnn {
    /// `vocab` counts the pad id.
    pub fn fit(train: &[Example], vocab: usize, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if k == 0 || k > train.len() {
            return Err(Error::KTooLarge { k, size: train.len() });
        }
        let classes = train.iter().map(|e| e.label).max().unwrap_or(0) + 1;
        let points = train
            .iter()
            .map(|e| Ok((histogram(&e.words, vocab)?, e.label)))
            .collect::<Result<_>>()?;
        Ok(Self {
            k,
            vocab,
            classes,
            points,
        })
    }

    pub fn predict(&self, seq: &WordSequence) -> Result<usize> {
        let h = histogram(seq, self.vocab)?;
        let mut dists: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| ((p - &h).iter().map(|d| d.abs()).sum(), i))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.classes];
        for &(_, i) in dists.iter().take(self.k) {
            votes[self.points[i].1] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn accuracy(&self, set: &[Example]) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let hits: Vec<Result<bool>> = set
            .par_iter()
            .map(|e| Ok(self.predict(&e.words)? == e.label))
            .collect();
        let mut correct = 0usize;
        for h in hits {
            correct += usize::from(h?);
        }
        Ok(correct as f64 / set.len() as f64)
    }
}

fn histogram(seq: &WordSequence, vocab: usize) -> Result<Array1<f64>> {
    let mut h = Array1::zeros(vocab);
    let mut n = 0usize;
    for &id in &seq.ids {
        if id == PAD_ID {
            continue;
        }
        if id >= vocab {
            return Err(Error::UnknownWordId { id, vocab });
        }
        h[id] += 1.0;
        n += 1;
    }
    if n > 0 {
        h /= n as f64;
    }
    Ok(h)
}
