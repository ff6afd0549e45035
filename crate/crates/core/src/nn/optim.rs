//! SGD with momentum (default) and Adam.
//!
//! Momentum SGD keeps a velocity `v <- momentum * v + g` and applies `w <- w - lr * v`.
//! Adam uses the usual bias-corrected first and second moment estimates.

use super::network::Network;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar = f32> {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    /// One entry per parameter tensor: velocity (SGD) or first moment (Adam).
    first: Vec<Tensor<T>>,
    /// Second moments, Adam only.
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every unfrozen parameter that has a gradient.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<()> {
        let mut slots = net.param_slots();
        if self.first.is_empty() {
            self.first = slots.iter().map(|s| Tensor::zeros(s.value.shape())).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        if self.first.len() != slots.len() {
            return Err(Error::InvalidArgument(
                "optimizer state does not match the network's parameters".into(),
            ));
        }
        self.step += 1;
        let lr = T::from_f64_lossy(self.learning_rate);
        for (i, slot) in slots.iter_mut().enumerate() {
            if self.first[i].shape() != slot.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer state",
                    expected: slot.value.shape().to_vec(),
                    actual: self.first[i].shape().to_vec(),
                });
            }
            let Some(grad) = slot.grad else { continue };
            if slot.frozen {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    let mu = T::from_f64_lossy(momentum);
                    let vel = self.first[i].data_mut();
                    for ((w, v), &g) in slot.value.data_mut().iter_mut().zip(vel).zip(grad.data()) {
                        *v = mu * *v + g;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let t = self.step as i32;
                    let c1 = T::from_f64_lossy(1.0 - beta1.powi(t));
                    let c2 = T::from_f64_lossy(1.0 - beta2.powi(t));
                    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
                    let eps = T::from_f64_lossy(epsilon);
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (((w, m), v), &g) in slot.value.data_mut().iter_mut().zip(m).zip(v).zip(grad.data()) {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
