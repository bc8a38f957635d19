use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_label, check_rate, embed_padded, scatter_embedding_grad, Classifier};
use crate::encoding::{EmbeddingTable, WordSequence};
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy, dropout, global_max_pool, max_pool_backward, relu, relu_backward, slice_of, slice_of_mut,
    softmax, softmax_cross_entropy_backward, Conv1d, Conv1dCache, Dense, DropoutMask, Parameters, Real,
};

/// Architecture of the parallel-convolution classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnnConfig {
    pub widths: Vec<usize>,
    pub filters: Vec<usize>,
    pub hidden: usize,
    /// Applied to the concatenated pooled vector.
    pub dropout_concat: f64,
    /// Applied between the two dense layers.
    pub dropout_hidden: f64,
    pub l_max: usize,
    /// Pool only over windows that touch at least one real word.
    pub masked_pool: bool,
}

impl TcnnConfig {
    pub fn new(l_max: usize) -> Self {
        Self {
            widths: vec![3, 4, 5],
            filters: vec![200, 200, 200],
            hidden: 256,
            dropout_concat: 0.2,
            dropout_hidden: 0.8,
            l_max,
            masked_pool: false,
        }
    }

    /// Length of the concatenated pooled vector.
    pub fn concat_len(&self) -> usize {
        self.filters.iter().sum()
    }

    fn validate(&self, classes: usize) -> Result<()> {
        if classes < 2 {
            return Err(Error::BadConfig(format!("need at least 2 classes, got {classes}")));
        }
        if self.widths.is_empty() || self.widths.len() != self.filters.len() {
            return Err(Error::BadConfig(format!(
                "{} widths for {} filter counts",
                self.widths.len(),
                self.filters.len()
            )));
        }
        if self.widths.contains(&0) || self.filters.contains(&0) || self.hidden == 0 {
            return Err(Error::BadConfig("widths, filter counts and hidden size must be positive".into()));
        }
        check_rate(self.dropout_concat)?;
        check_rate(self.dropout_hidden)?;
        let widest = *self.widths.iter().max().unwrap_or(&1);
        if self.l_max < widest {
            return Err(Error::WindowTooLarge {
                window: widest,
                len: self.l_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcnnModel<T> {
    config: TcnnConfig,
    classes: usize,
    pub embeddings: EmbeddingTable<T>,
    pub convs: Vec<Conv1d<T>>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

/// Builds a model around `table` with weights drawn from `seed`.
pub fn build_tcnn<T: Real>(
    classes: usize,
    table: EmbeddingTable<T>,
    config: TcnnConfig,
    seed: u64,
) -> Result<TcnnModel<T>> {
    config.validate(classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = table.dim();
    let convs = config
        .widths
        .iter()
        .zip(&config.filters)
        .map(|(&w, &f)| Conv1d::new(f, w, dim, &mut rng))
        .collect();
    let fc1 = Dense::new(config.concat_len(), config.hidden, &mut rng);
    let fc2 = Dense::new(config.hidden, classes, &mut rng);
    Ok(TcnnModel {
        config,
        classes,
        embeddings: table,
        convs,
        fc1,
        fc2,
    })
}

struct Trace<T> {
    ids: Vec<usize>,
    caches: Vec<Conv1dCache<T>>,
    activations: Vec<Array2<T>>,
    argmax: Vec<Vec<usize>>,
    concat_dropped: Array1<T>,
    mask_concat: Option<DropoutMask<T>>,
    hidden: Array1<T>,
    hidden_dropped: Array1<T>,
    mask_hidden: Option<DropoutMask<T>>,
    probs: Array1<T>,
}

impl<T: Real> TcnnModel<T> {
    pub fn config(&self) -> &TcnnConfig {
        &self.config
    }

    /// Parameter count excluding the embedding table.
    pub fn num_network_parameters(&self) -> usize {
        self.num_parameters() - self.embeddings.rows().len()
    }

    fn run(&self, seq: &WordSequence, mut rng: Option<&mut ChaCha8Rng>) -> Result<Trace<T>> {
        let input = embed_padded(seq, &self.embeddings, self.config.l_max)?;
        let mut concat = Array1::zeros(self.config.concat_len());
        let mut caches = Vec::with_capacity(self.convs.len());
        let mut activations = Vec::with_capacity(self.convs.len());
        let mut argmax = Vec::with_capacity(self.convs.len());
        let mut offset = 0;
        for conv in &self.convs {
            let (out, cache) = conv.forward_cached(input.omega.view())?;
            let act = relu(&out);
            let valid = self.config.masked_pool.then_some(input.valid);
            let pooled = global_max_pool(act.view(), valid)?;
            concat
                .slice_mut(s![offset..offset + conv.filters()])
                .assign(&pooled.values);
            offset += conv.filters();
            caches.push(cache);
            activations.push(act);
            argmax.push(pooled.argmax);
        }
        let (concat_dropped, mask_concat) = dropout(&concat, self.config.dropout_concat, rng.as_deref_mut())?;
        let hidden = relu(&self.fc1.forward(concat_dropped.view())?);
        let (hidden_dropped, mask_hidden) = dropout(&hidden, self.config.dropout_hidden, rng.as_deref_mut())?;
        let logits = self.fc2.forward(hidden_dropped.view())?;
        let probs = softmax(logits.view());
        Ok(Trace {
            ids: input.ids,
            caches,
            activations,
            argmax,
            concat_dropped,
            mask_concat,
            hidden,
            hidden_dropped,
            mask_hidden,
            probs,
        })
    }
}

fn through_mask<T: Real>(mask: &Option<DropoutMask<T>>, grad: Array1<T>) -> Array1<T> {
    match mask {
        Some(m) => m.apply(&grad),
        None => grad,
    }
}

impl<T: Real> Classifier<T> for TcnnModel<T> {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn l_max(&self) -> usize {
        self.config.l_max
    }

    fn embeddings(&self) -> &EmbeddingTable<T> {
        &self.embeddings
    }

    fn zero_grads(&self) -> Self {
        let mut rows = self.embeddings.rows().clone();
        rows.fill(T::zero());
        Self {
            config: self.config.clone(),
            classes: self.classes,
            embeddings: EmbeddingTable::from_rows(rows, self.embeddings.init_mode())
                .expect("zero table is valid"),
            convs: self.convs.iter().map(Conv1d::zeros_like).collect(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    fn probabilities(&self, seq: &WordSequence, rng: Option<&mut ChaCha8Rng>) -> Result<Array1<T>> {
        Ok(self.run(seq, rng)?.probs)
    }

    fn accumulate_gradient(
        &self,
        seq: &WordSequence,
        label: usize,
        rng: Option<&mut ChaCha8Rng>,
        scale: T,
        train_embeddings: bool,
        grads: &mut Self,
    ) -> Result<(T, Array1<T>)> {
        check_label(label, self.classes)?;
        let trace = self.run(seq, rng)?;
        let loss = cross_entropy(trace.probs.view(), label);

        let d_logits = softmax_cross_entropy_backward(trace.probs.view(), label) * scale;
        let d_hidden_dropped = self
            .fc2
            .backward(trace.hidden_dropped.view(), d_logits.view(), &mut grads.fc2);
        let d_hidden = relu_backward(&trace.hidden, &through_mask(&trace.mask_hidden, d_hidden_dropped));
        let d_concat_dropped = self
            .fc1
            .backward(trace.concat_dropped.view(), d_hidden.view(), &mut grads.fc1);
        let d_concat = through_mask(&trace.mask_concat, d_concat_dropped);

        let mut d_omega = Array2::zeros((self.embeddings.dim(), self.config.l_max));
        let mut offset = 0;
        for (l, conv) in self.convs.iter().enumerate() {
            let act = &trace.activations[l];
            let d_pooled = d_concat.slice(s![offset..offset + conv.filters()]);
            offset += conv.filters();
            let d_act = max_pool_backward(d_pooled, &trace.argmax[l], act.ncols());
            let d_out = relu_backward(act, &d_act);
            d_omega += &conv.backward(&trace.caches[l], d_out.view(), &mut grads.convs[l]);
        }
        if train_embeddings {
            scatter_embedding_grad(&d_omega, &trace.ids, &mut grads.embeddings);
        }
        Ok((loss, trace.probs))
    }
}

impl<T: Real> Parameters<T> for TcnnModel<T> {
    fn blocks(&self) -> Vec<&[T]> {
        let mut out = vec![slice_of(self.embeddings.rows())];
        for conv in &self.convs {
            out.extend(conv.blocks());
        }
        out.extend(self.fc1.blocks());
        out.extend(self.fc2.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![slice_of_mut(self.embeddings.rows_mut())];
        for conv in &mut self.convs {
            out.extend(conv.blocks_mut());
        }
        out.extend(self.fc1.blocks_mut());
        out.extend(self.fc2.blocks_mut());
        out
    }
}
