#![allow(dead_code)]

use actionwords::encoding::{EmbeddingTable, InitMode, WordSequence};
use actionwords::models::{Classifier, Example};
use actionwords::nn::{
    cross_entropy, global_max_pool, max_pool_backward, relu, relu_backward, softmax,
    softmax_cross_entropy_backward, Conv1d, Dense, Lstm, Parameters,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Default, Clone)]
pub struct GradReport {
    pub checked: usize,
    pub failed: usize,
    pub worst: f64,
}

impl GradReport {
    pub fn record(&mut self, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        self.checked += 1;
        if rel > FD_TOL {
            self.failed += 1;
        }
        self.worst = self.worst.max(rel);
    }

    pub fn merge(&mut self, other: &GradReport) {
        self.checked += other.checked;
        self.failed += other.failed;
        self.worst = self.worst.max(other.worst);
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failed == 0
    }
}

pub fn random_matrix(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0))
}

pub fn random_table(vocab: usize, dim: usize, seed: u64) -> EmbeddingTable<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = random_matrix((vocab, dim), &mut rng);
    rows.row_mut(0).fill(0.0);
    EmbeddingTable::from_rows(rows, InitMode::Random).unwrap()
}

/// Central differences over every parameter of `params`, comparing against
/// `analytic` laid out in the same block order. `skip(block, index)` marks
/// entries that are not free parameters.
pub fn check_parameters<P: Parameters<f64>>(
    params: &mut P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
    skip: impl Fn(usize, usize) -> bool,
) -> GradReport {
    let mut report = GradReport::default();
    let grads: Vec<Vec<f64>> = analytic.blocks().iter().map(|b| b.to_vec()).collect();
    for (b, block) in grads.iter().enumerate() {
        for (j, &a) in block.iter().enumerate() {
            if skip(b, j) {
                continue;
            }
            let v = params.blocks()[b][j];
            params.blocks_mut()[b][j] = v + FD_STEP;
            let up = loss(params);
            params.blocks_mut()[b][j] = v - FD_STEP;
            let down = loss(params);
            params.blocks_mut()[b][j] = v;
            report.record(a, (up - down) / (2.0 * FD_STEP));
        }
    }
    report
}

fn check_input(input: &mut Array2<f64>, analytic: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64) -> GradReport {
    let mut report = GradReport::default();
    for idx in 0..input.len() {
        let (r, c) = (idx / input.ncols(), idx % input.ncols());
        let v = input[[r, c]];
        input[[r, c]] = v + FD_STEP;
        let up = loss(input);
        input[[r, c]] = v - FD_STEP;
        let down = loss(input);
        input[[r, c]] = v;
        report.record(analytic[[r, c]], (up - down) / (2.0 * FD_STEP));
    }
    report
}

/// Conv1d with the projection loss `sum(R * conv(x))`.
pub fn conv_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv1d::<f64>::new(4, 3, 8, &mut rng);
    let mut x = random_matrix((8, 12), &mut rng);
    let r = random_matrix((4, 10), &mut rng);
    let (_, cache) = conv.forward_cached(x.view()).unwrap();
    let mut grads = conv.zeros_like();
    let dx = conv.backward(&cache, r.view(), &mut grads);
    let mut report = check_parameters(&mut conv, &grads, |c| (c.forward(x.view()).unwrap() * &r).sum(), |_, _| false);
    let fixed = conv.clone();
    report.merge(&check_input(&mut x, &dx, |x| (fixed.forward(x.view()).unwrap() * &r).sum()));
    report
}

pub fn dense_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Dense::<f64>::new(8, 5, &mut rng);
    let x = random_vector(8, &mut rng);
    let r = random_vector(5, &mut rng);
    let mut grads = layer.zeros_like();
    let dx = layer.backward(x.view(), r.view(), &mut grads);
    let mut report = check_parameters(&mut layer, &grads, |l| l.forward(x.view()).unwrap().dot(&r), |_, _| false);
    let fixed = layer.clone();
    let mut xm = x.clone().insert_axis(ndarray::Axis(0));
    let dxm = dx.insert_axis(ndarray::Axis(0));
    report.merge(&check_input(&mut xm, &dxm, |x| fixed.forward(x.row(0)).unwrap().dot(&r)));
    report
}

pub fn lstm_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Lstm::<f64>::new(8, 5, &mut rng);
    let mut x = random_matrix((12, 8), &mut rng);
    let r = random_matrix((12, 5), &mut rng);
    let cache = layer.forward_sequence(x.view()).unwrap();
    let mut grads = layer.zeros_like();
    let dx = layer.backward_sequence(&cache, r.view(), &mut grads);
    let loss = |l: &Lstm<f64>, x: &Array2<f64>| (l.forward_sequence(x.view()).unwrap().hidden() * &r).sum();
    let mut report = check_parameters(&mut layer, &grads, |l| loss(l, &x), |_, _| false);
    let fixed = layer.clone();
    report.merge(&check_input(&mut x, &dx, |x| loss(&fixed, x)));
    report
}

/// ReLU followed by global max pooling, then a projection.
pub fn relu_pool_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_matrix((6, 10), &mut rng);
    let r = random_vector(6, &mut rng);
    let loss = |x: &Array2<f64>| global_max_pool(relu(x).view(), None).unwrap().values.dot(&r);
    let act = relu(&x);
    let pooled = global_max_pool(act.view(), None).unwrap();
    let d_act = max_pool_backward(r.view(), &pooled.argmax, 10);
    let dx = relu_backward(&act, &d_act);
    check_input(&mut x, &dx, loss)
}

pub fn softmax_ce_report(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_vector(3, &mut rng) * 3.0;
    let label = 1;
    let dz = softmax_cross_entropy_backward(softmax(z.view()).view(), label);
    let mut zm = z.insert_axis(ndarray::Axis(0));
    let dzm = dz.insert_axis(ndarray::Axis(0));
    check_input(&mut zm, &dzm, |z| cross_entropy(softmax(z.row(0)).view(), label))
}

pub fn toy_batch() -> Vec<Example> {
    let seqs = [
        vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8],
        vec![2, 7, 1, 8, 2, 8, 1],
        vec![9, 9, 4],
    ];
    seqs.iter()
        .enumerate()
        .map(|(label, ids)| Example {
            video_id: format!("toy{label}"),
            label,
            words: WordSequence::new(ids.clone()),
        })
        .collect()
}

/// Mean cross-entropy over `batch` in training mode, with sample `i` using
/// dropout seed `seed + i`.
pub fn batch_loss<M: Classifier<f64>>(model: &M, batch: &[Example], seed: u64) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + i as u64);
            let p = model.probabilities(&ex.words, Some(&mut rng)).unwrap();
            cross_entropy(p.view(), ex.label)
        })
        .sum::<f64>()
        / n
}

pub fn batch_gradient<M: Classifier<f64>>(model: &M, batch: &[Example], seed: u64, train_embeddings: bool) -> M {
    let mut grads = model.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    for (i, ex) in batch.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + i as u64);
        model
            .accumulate_gradient(&ex.words, ex.label, Some(&mut rng), scale, train_embeddings, &mut grads)
            .unwrap();
    }
    grads
}

/// Full-model check. The pad row (first `dim` entries of block 0) is fixed
/// at zero and is not a parameter.
pub fn model_report<M: Classifier<f64>>(model: &mut M, dropout_seed: u64) -> GradReport {
    let batch = toy_batch();
    let grads = batch_gradient(model, &batch, dropout_seed, true);
    let dim = model.embeddings().dim();
    check_parameters(model, &grads, |m| batch_loss(m, &batch, dropout_seed), |b, j| b == 0 && j < dim)
}
