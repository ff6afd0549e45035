use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes only where the input was strictly positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            op: "relu backward",
            expected: input.shape().to_vec(),
            actual: upstream.shape().to_vec(),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Softmax over the last axis, with max-subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let n = *logits.shape().last().expect("tensor has rank >= 1");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(n) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Vector-Jacobian product of softmax: `dx_i = y_i (g_i - sum_j g_j y_j)`.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax backward",
            expected: output.shape().to_vec(),
            actual: upstream.shape().to_vec(),
        });
    }
    let n = *output.shape().last().expect("rank >= 1");
    let mut dx = Vec::with_capacity(output.len());
    for (y, g) in output.data().chunks(n).zip(upstream.data().chunks(n)) {
        let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
        dx.extend(y.iter().zip(g).map(|(&a, &b)| a * (b - dot)));
    }
    Tensor::new(output.shape().to_vec(), dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` at training time, so inference
/// is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns the output and, in training mode with a non-zero rate, the keep-mask.
    pub fn forward<T: Scalar>(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> (Tensor<T>, Option<Vec<bool>>) {
        if mode == Mode::Inference || self.rate == 0.0 {
            return (input.clone(), None);
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - self.rate));
        let mask: Vec<bool> = (0..input.len()).map(|_| rng.gen::<f64>() >= self.rate).collect();
        let out = input
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &keep)| if keep { v * scale } else { T::zero() })
            .collect();
        (
            Tensor::new(input.shape().to_vec(), out).expect("same shape"),
            Some(mask),
        )
    }

    pub fn backward<T: Scalar>(&self, mask: Option<&[bool]>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let Some(mask) = mask else {
            return Ok(upstream.clone());
        };
        if mask.len() != upstream.len() {
            return Err(Error::ShapeMismatch {
                op: "dropout backward",
                expected: vec![mask.len()],
                actual: upstream.shape().to_vec(),
            });
        }
        let scale = T::from_f64_lossy(1.0 / (1.0 - self.rate));
        let data = upstream
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &keep)| if keep { g * scale } else { T::zero() })
            .collect();
        Tensor::new(upstream.shape().to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_clamps_negatives_and_zero_gradient_at_zero() {
        let x = Tensor::new(vec![3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::filled(&[3], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
        let pos = Tensor::new(vec![2], vec![0.5f32, 3.0]).unwrap();
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn softmax_known_values() {
        let s = softmax(&Tensor::new(vec![2], vec![0.0f64, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        // exp(1)/(exp(1)+exp(2)) evaluated directly
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        let s = softmax(&Tensor::new(vec![2], vec![1.0f32, 2.0]).unwrap());
        assert!((s.data()[0] as f64 - e1 / (e1 + e2)).abs() < 1e-4);
        assert!((s.data()[0] - 0.26894).abs() < 1e-4);
        assert!((s.data()[1] - 0.73106).abs() < 1e-4);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let x = Tensor::new(vec![4], vec![0.3f32, -1.2, 2.5, 0.0]).unwrap();
        let a = softmax(&x);
        let b = softmax(&x.map(|v| v + 2.0));
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-6);
        }
        // large shifts only stay exact when the shifted logits are representable
        let x64 = x.cast::<f64>();
        let c = softmax(&x64.map(|v| v + 1000.0));
        for (p, q) in a.data().iter().zip(c.data()) {
            assert!((*p as f64 - q).abs() < 1e-6);
        }
        let sum: f32 = a.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dropout_zero_rate_and_inference_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_fn(&[10], |i| i as f32);
        let d0 = Dropout::new(0.0).unwrap();
        assert_eq!(d0.forward(&x, Mode::Train, &mut rng).0, x);
        assert_eq!(d0.forward(&x, Mode::Inference, &mut rng).0, x);
        let d = Dropout::new(0.3).unwrap();
        assert_eq!(d.forward(&x, Mode::Inference, &mut rng).0, x);
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = Dropout::new(0.3).unwrap();
        let x = Tensor::filled(&[100_000], 1.0f32);
        let (y, mask) = d.forward(&x, Mode::Train, &mut rng);
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / 1e5;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        let dropped = mask.unwrap().iter().filter(|k| !**k).count() as f64 / 1e5;
        assert!((dropped - 0.3).abs() < 0.01);
    }
}
