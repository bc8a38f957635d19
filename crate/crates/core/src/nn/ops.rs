use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Dimension, Zip};
use rand::Rng;

use super::Real;
use crate::error::{Error, Result};

/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn relu<T: Real, D: Dimension>(x: &Array<T, D>) -> Array<T, D> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given its output; zero at the kink.
pub fn relu_backward<T: Real, D: Dimension>(output: &Array<T, D>, grad: &Array<T, D>) -> Array<T, D> {
    let mut out = grad.clone();
    Zip::from(&mut out).and(output).for_each(|g, &y| {
        if y <= T::zero() {
            *g = T::zero();
        }
    });
    out
}

/// Per-row maximum and the time index it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub values: Array1<T>,
    pub argmax: Vec<usize>,
}

/// Maximum over time for each row of `act` (`filters x time`). With
/// `valid = Some(n)` only the first `n` positions take part. Ties resolve to
/// the earliest position.
pub fn global_max_pool<T: Real>(act: ArrayView2<'_, T>, valid: Option<usize>) -> Result<Pooled<T>> {
    let width = act.ncols();
    let width = match valid {
        Some(n) => n.min(width),
        None => width,
    };
    if width == 0 {
        return Err(Error::EmptyMask);
    }
    let mut values = Array1::zeros(act.nrows());
    let mut argmax = vec![0; act.nrows()];
    for (f, row) in act.rows().into_iter().enumerate() {
        let mut best = row[0];
        let mut at = 0;
        for t in 1..width {
            if row[t] > best {
                best = row[t];
                at = t;
            }
        }
        values[f] = best;
        argmax[f] = at;
    }
    Ok(Pooled { values, argmax })
}

/// Routes each pooled gradient back to its argmax position.
pub fn max_pool_backward<T: Real>(grad: ArrayView1<'_, T>, argmax: &[usize], time: usize) -> Array2<T> {
    let mut out = Array2::zeros((grad.len(), time));
    for (f, (&g, &t)) in grad.iter().zip(argmax).enumerate() {
        out[[f, t]] = g;
    }
    out
}

pub fn softmax<T: Real>(z: ArrayView1<'_, T>) -> Array1<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exp = z.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

pub fn cross_entropy<T: Real>(p: ArrayView1<'_, T>, label: usize) -> T {
    -p[label].max(T::from_f64(PROB_FLOOR)).ln()
}

/// Gradient of `cross_entropy(softmax(z), label)` with respect to `z`.
pub fn softmax_cross_entropy_backward<T: Real>(p: ArrayView1<'_, T>, label: usize) -> Array1<T> {
    let mut dz = p.to_owned();
    dz[label] -= T::one();
    dz
}

/// Inverted-dropout scale factors: 0 for dropped units, `1/(1-rate)` for kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T> {
    pub factors: Array1<T>,
}

impl<T: Real> DropoutMask<T> {
    pub fn apply(&self, x: &Array1<T>) -> Array1<T> {
        x * &self.factors
    }
}

/// Inverted dropout. In inference mode (`rng = None`) this is the identity and
/// no mask is returned.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Array1<T>,
    rate: f64,
    rng: Option<&mut R>,
) -> Result<(Array1<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    let Some(rng) = rng else {
        return Ok((x.clone(), None));
    };
    if rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let factors = Array1::from_shape_simple_fn(x.len(), || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    });
    let mask = DropoutMask { factors };
    Ok((mask.apply(x), Some(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_values_and_idempotence() {
        let x = array![-1.0, 2.0, 0.0];
        assert_eq!(relu(&x), array![0.0, 2.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = Array2::from_shape_simple_fn((5, 7), || rng.random_range(-1.0..1.0f64));
        assert_eq!(relu(&relu(&r)), relu(&r));
        let g = relu_backward(&relu(&x), &array![1.0, 1.0, 1.0]);
        assert_eq!(g, array![0.0, 1.0, 0.0]);
    }

    #[test]
    fn max_pool_cases() {
        let single = array![[3.0], [-2.0]];
        assert_eq!(global_max_pool(single.view(), None).unwrap().values, array![3.0, -2.0]);
        let neg = array![[-3.0, -1.0, -2.0]];
        let p = global_max_pool(neg.view(), None).unwrap();
        assert_eq!((p.values[0], p.argmax[0]), (-1.0, 1));
        let masked = global_max_pool(array![[1.0, 5.0, 9.0]].view(), Some(2)).unwrap();
        assert_eq!(masked.values[0], 5.0);
        assert!(matches!(global_max_pool(neg.view(), Some(0)), Err(Error::EmptyMask)));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let act = Array2::from_shape_simple_fn((6, 9), || rng.random_range(-1.0..1.0f64));
        let p = global_max_pool(act.view(), None).unwrap();
        for f in 0..6 {
            let scan = act.row(f).iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(p.values[f], scan);
            assert_eq!(act[[f, p.argmax[f]]], scan);
        }
        let back = max_pool_backward(array![1.0, 2.0].view(), &[2, 0], 3);
        assert_eq!(back, array![[0.0, 0.0, 1.0], [2.0, 0.0, 0.0]]);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(array![0.0, 0.0].view()), array![0.5, 0.5]);
        let z: Array1<f64> = array![0.3, -1.2, 2.0, 0.7];
        let p = softmax(z.view());
        let shifted = softmax((&z + 100.0).view());
        for (a, b) in p.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        for (i, &v) in z.iter().enumerate() {
            assert!((p[i] - v.exp() / denom).abs() < 1e-12);
        }
        assert!((p.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(array![0.0, 1.0].view(), 1), 0.0);
        let c = 7;
        let uniform = Array1::from_elem(c, 1.0 / c as f64);
        assert!((cross_entropy(uniform.view(), 3) - (c as f64).ln()).abs() < 1e-12);
        let p = array![0.2, 0.5, 0.3];
        assert!((cross_entropy(p.view(), 2) + 0.3f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(array![1.0, 0.0].view(), 1) - (1e12f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn dropout_modes() {
        let x = Array1::from_elem(10, 2.0f64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(dropout(&x, 0.0, Some(&mut rng)).unwrap().0, x);
        assert_eq!(dropout::<f64, ChaCha8Rng>(&x, 0.7, None).unwrap().0, x);
        assert!(matches!(dropout(&x, 1.0, Some(&mut rng)), Err(Error::InvalidRate(_))));

        let big = Array1::from_elem(100_000, 1.0f64);
        for rate in [0.2, 0.5, 0.8] {
            let (out, _) = dropout(&big, rate, Some(&mut rng)).unwrap();
            let zeros = out.iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
            assert!((zeros - rate).abs() <= 0.01, "rate {rate}: {zeros}");
            let kept = out.iter().find(|&&v| v != 0.0).unwrap();
            assert!((kept - 1.0 / (1.0 - rate)).abs() < 1e-12);
        }
    }
}
