use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_label, check_rate, embed_padded, scatter_embedding_grad, Classifier};
use crate::encoding::{EmbeddingTable, WordSequence};
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy, dropout, relu, relu_backward, slice_of, slice_of_mut, softmax,
    softmax_cross_entropy_backward, Conv1d, Conv1dCache, Dense, DropoutMask, Lstm, LstmCache, Parameters, Real,
};

/// Architecture of the convolution + stacked LSTM classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClstmConfig {
    pub width: usize,
    pub filters: usize,
    pub hidden: [usize; 2],
    pub dropout: f64,
    pub l_max: usize,
    /// Run the recurrence only over windows that touch a real word.
    pub masked: bool,
}

impl ClstmConfig {
    pub fn new(l_max: usize) -> Self {
        Self {
            width: 5,
            filters: 200,
            hidden: [100, 100],
            dropout: 0.6,
            l_max,
            masked: false,
        }
    }

    fn validate(&self, classes: usize) -> Result<()> {
        if classes < 2 {
            return Err(Error::BadConfig(format!("need at least 2 classes, got {classes}")));
        }
        if self.width == 0 || self.filters == 0 || self.hidden.contains(&0) {
            return Err(Error::BadConfig("width, filter count and hidden sizes must be positive".into()));
        }
        check_rate(self.dropout)?;
        if self.l_max < self.width {
            return Err(Error::WindowTooLarge {
                window: self.width,
                len: self.l_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClstmModel<T> {
    config: ClstmConfig,
    classes: usize,
    pub embeddings: EmbeddingTable<T>,
    pub conv: Conv1d<T>,
    pub lstm1: Lstm<T>,
    pub lstm2: Lstm<T>,
    pub out: Dense<T>,
}

pub fn build_clstm<T: Real>(
    classes: usize,
    table: EmbeddingTable<T>,
    config: ClstmConfig,
    seed: u64,
) -> Result<ClstmModel<T>> {
    config.validate(classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = Conv1d::new(config.filters, config.width, table.dim(), &mut rng);
    let lstm1 = Lstm::new(config.filters, config.hidden[0], &mut rng);
    let lstm2 = Lstm::new(config.hidden[0], config.hidden[1], &mut rng);
    let out = Dense::new(config.hidden[1], classes, &mut rng);
    Ok(ClstmModel {
        config,
        classes,
        embeddings: table,
        conv,
        lstm1,
        lstm2,
        out,
    })
}

struct Trace<T> {
    ids: Vec<usize>,
    conv_cache: Conv1dCache<T>,
    activation: Array2<T>,
    steps: usize,
    cache1: LstmCache<T>,
    cache2: LstmCache<T>,
    last_dropped: Array1<T>,
    mask: Option<DropoutMask<T>>,
    probs: Array1<T>,
}

impl<T: Real> ClstmModel<T> {
    pub fn config(&self) -> &ClstmConfig {
        &self.config
    }

    pub fn num_network_parameters(&self) -> usize {
        self.num_parameters() - self.embeddings.rows().len()
    }

    fn run(&self, seq: &WordSequence, rng: Option<&mut ChaCha8Rng>) -> Result<Trace<T>> {
        let input = embed_padded(seq, &self.embeddings, self.config.l_max)?;
        let (out, conv_cache) = self.conv.forward_cached(input.omega.view())?;
        let activation = relu(&out);
        let steps = if self.config.masked {
            input.valid.min(activation.ncols()).max(1)
        } else {
            activation.ncols()
        };
        let series = activation.slice(s![.., ..steps]).t().to_owned();
        let cache1 = self.lstm1.forward_sequence(series.view())?;
        let cache2 = self.lstm2.forward_sequence(cache1.hidden().view())?;
        let last = cache2.hidden().row(steps - 1).to_owned();
        let (last_dropped, mask) = dropout(&last, self.config.dropout, rng)?;
        let probs = softmax(self.out.forward(last_dropped.view())?.view());
        Ok(Trace {
            ids: input.ids,
            conv_cache,
            activation,
            steps,
            cache1,
            cache2,
            last_dropped,
            mask,
            probs,
        })
    }
}

impl<T: Real> Classifier<T> for ClstmModel<T> {
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
            conv: self.conv.zeros_like(),
            lstm1: self.lstm1.zeros_like(),
            lstm2: self.lstm2.zeros_like(),
            out: self.out.zeros_like(),
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
        let d_dropped = self
            .out
            .backward(trace.last_dropped.view(), d_logits.view(), &mut grads.out);
        let d_last = match &trace.mask {
            Some(m) => m.apply(&d_dropped),
            None => d_dropped,
        };
        let mut d_hidden2 = Array2::zeros((trace.steps, self.lstm2.hidden_size()));
        d_hidden2.row_mut(trace.steps - 1).assign(&d_last);
        let d_hidden1 = self
            .lstm2
            .backward_sequence(&trace.cache2, d_hidden2.view(), &mut grads.lstm2);
        let d_series = self
            .lstm1
            .backward_sequence(&trace.cache1, d_hidden1.view(), &mut grads.lstm1);

        let mut d_act = Array2::zeros(trace.activation.dim());
        d_act.slice_mut(s![.., ..trace.steps]).assign(&d_series.t());
        let d_out = relu_backward(&trace.activation, &d_act);
        let d_omega = self.conv.backward(&trace.conv_cache, d_out.view(), &mut grads.conv);
        if train_embeddings {
            scatter_embedding_grad(&d_omega, &trace.ids, &mut grads.embeddings);
        }
        Ok((loss, trace.probs))
    }
}

impl<T: Real> Parameters<T> for ClstmModel<T> {
    fn blocks(&self) -> Vec<&[T]> {
        let mut out = vec![slice_of(self.embeddings.rows())];
        out.extend(self.conv.blocks());
        out.extend(self.lstm1.blocks());
        out.extend(self.lstm2.blocks());
        out.extend(self.out.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![slice_of_mut(self.embeddings.rows_mut())];
        out.extend(self.conv.blocks_mut());
        out.extend(self.lstm1.blocks_mut());
        out.extend(self.lstm2.blocks_mut());
        out.extend(self.out.blocks_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{embed, InitMode};
    use rand::Rng;

    fn table(vocab: usize, dim: usize, seed: u64) -> EmbeddingTable<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Array2::from_shape_simple_fn((vocab, dim), || rng.random_range(-1.0..1.0));
        rows.row_mut(0).fill(0.0);
        EmbeddingTable::from_rows(rows, InitMode::Random).unwrap()
    }

    fn small() -> ClstmConfig {
        ClstmConfig {
            width: 3,
            filters: 6,
            hidden: [5, 4],
            ..ClstmConfig::new(10)
        }
    }

    #[test]
    fn defaults_follow_the_published_setup() {
        let cfg = ClstmConfig::new(40);
        assert_eq!((cfg.width, cfg.filters, cfg.hidden, cfg.dropout), (5, 200, [100, 100], 0.6));
    }

    #[test]
    fn parameter_count_matches_formula() {
        let (c, d) = (4, 7);
        let model = build_clstm(c, table(9, d, 0), small(), 1).unwrap();
        let (w, f, h1, h2) = (3, 6, 5, 4);
        let expected = f * (w * d + 1) + 4 * h1 * (f + h1 + 1) + 4 * h2 * (h1 + h2 + 1) + h2 * c + c;
        assert_eq!(model.num_network_parameters(), expected);
    }

    #[test]
    fn zero_parameters_give_uniform_output() {
        let mut model = build_clstm(3, table(9, 4, 2), small(), 3).unwrap();
        for block in model.blocks_mut().into_iter().skip(1) {
            block.fill(0.0);
        }
        let p = model.probabilities(&WordSequence::new(vec![1, 2, 3, 4]), None).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_window_sequence() {
        let cfg = ClstmConfig {
            l_max: 3,
            ..small()
        };
        let model = build_clstm(2, table(9, 4, 4), cfg, 5).unwrap();
        let p = model.probabilities(&WordSequence::new(vec![7, 8, 1]), None).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_step_by_step_composition() {
        let model = build_clstm(3, table(9, 4, 6), small(), 7).unwrap();
        let seq = WordSequence::new(vec![2, 5, 5, 8, 1, 3, 4]);
        let omega = embed(&seq.pad_or_truncate(10), &model.embeddings).unwrap();
        let act = relu(&model.conv.forward(omega.view()).unwrap());
        let (mut h1, mut c1) = (Array1::zeros(5), Array1::zeros(5));
        let (mut h2, mut c2) = (Array1::zeros(4), Array1::zeros(4));
        for t in 0..act.ncols() {
            (h1, c1) = model.lstm1.cell_forward(act.column(t), h1.view(), c1.view()).unwrap();
            (h2, c2) = model.lstm2.cell_forward(h1.view(), h2.view(), c2.view()).unwrap();
        }
        let expected = softmax(model.out.forward(h2.view()).unwrap().view());
        let got = model.probabilities(&seq, None).unwrap();
        for (x, y) in got.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
