//! Sequence classifiers over embedded word sentences, their training loop,
//! early-prediction evaluation and a synthetic order-sensitive dataset.

mod baseline;
mod clstm;
mod eval;
mod synth;
mod tcnn;
mod train;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{embed, EmbeddingTable, WordSequence, PAD_ID};
use crate::error::{Error, Result};
use crate::nn::{Parameters, Real};

pub use baseline::HistogramKnn;
pub use clstm::{build_clstm, ClstmConfig, ClstmModel};
pub use eval::{predict, prediction_curve, prefix, recognition_accuracy, PredictionCurve, CURVE_POINTS};
pub use synth::{
    class_transitions, generate_from_transitions, generate_synthetic_dataset, render_features,
    stationary_distribution, SyntheticConfig,
};
pub use tcnn::{build_tcnn, TcnnConfig, TcnnModel};
pub use train::{train, EpochStats, TrainConfig};

/// One labelled sentence. Serializes as `{"video_id", "label", "ids"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub video_id: String,
    pub label: usize,
    #[serde(flatten)]
    pub words: WordSequence,
}

/// What the training loop and evaluators need from a model. Gradients are
/// accumulated into a zeroed model of the same shape.
pub trait Classifier<T: Real>: Parameters<T> + Clone + Send + Sync {
    fn num_classes(&self) -> usize;

    fn l_max(&self) -> usize;

    fn embeddings(&self) -> &EmbeddingTable<T>;

    fn zero_grads(&self) -> Self;

    /// Class probabilities. Passing an RNG switches dropout on.
    fn probabilities(&self, seq: &WordSequence, rng: Option<&mut ChaCha8Rng>) -> Result<Array1<T>>;

    /// Adds `scale * dL/dθ` into `grads` and returns the unscaled loss and
    /// the probabilities. Embedding rows are skipped unless
    /// `train_embeddings` is set.
    fn accumulate_gradient(
        &self,
        seq: &WordSequence,
        label: usize,
        rng: Option<&mut ChaCha8Rng>,
        scale: T,
        train_embeddings: bool,
        grads: &mut Self,
    ) -> Result<(T, Array1<T>)>;
}

/// Padded input for one forward pass.
pub(crate) struct Embedded<T> {
    pub omega: Array2<T>,
    pub ids: Vec<usize>,
    pub valid: usize,
}

pub(crate) fn embed_padded<T: Real>(
    seq: &WordSequence,
    table: &EmbeddingTable<T>,
    l_max: usize,
) -> Result<Embedded<T>> {
    let padded = seq.pad_or_truncate(l_max);
    let omega = embed(&padded, table)?;
    Ok(Embedded {
        valid: padded.real_len(),
        ids: padded.ids,
        omega,
    })
}

/// Sends each column of `d_omega` to the embedding row it was read from.
pub(crate) fn scatter_embedding_grad<T: Real>(d_omega: &Array2<T>, ids: &[usize], grads: &mut EmbeddingTable<T>) {
    let rows = grads.rows_mut();
    for (t, &id) in ids.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let mut row = rows.row_mut(id);
        row += &d_omega.column(t);
    }
}

pub(crate) fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(())
}
