use super::{Parameters, Real};

/// RMSProp with one squared-gradient accumulator per parameter.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            rho: 0.9,
            eps: 1e-8,
            acc: Vec::new(),
        }
    }

    /// `params -= lr * g / (sqrt(acc) + eps)` after folding `g^2` into `acc`.
    pub fn step<T: Real, P: Parameters<T> + ?Sized>(&mut self, params: &mut P, grads: &P) {
        let grad_blocks = grads.blocks();
        if self.acc.len() != grad_blocks.len() {
            self.acc = grad_blocks.iter().map(|b| vec![0.0; b.len()]).collect();
        }
        for ((dst, src), acc) in params.blocks_mut().into_iter().zip(grad_blocks).zip(&mut self.acc) {
            debug_assert_eq!(dst.len(), src.len());
            for ((p, &g), a) in dst.iter_mut().zip(src).zip(acc.iter_mut()) {
                let g = g.to_f64();
                *a = self.rho * *a + (1.0 - self.rho) * g * g;
                let delta = self.lr * g / (a.sqrt() + self.eps);
                *p = T::from_f64(p.to_f64() - delta);
            }
        }
    }
}
