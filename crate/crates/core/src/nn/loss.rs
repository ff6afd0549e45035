use super::activation::softmax_in_place;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy of softmax probabilities against a class index.
///
/// Returns the loss and the gradient with respect to the logits that produced `probs`,
/// which for the combined softmax + cross-entropy is `probs - onehot(label)`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<(f64, Tensor<T>)> {
    if probs.rank() != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            expected: vec![probs.len()],
            actual: probs.shape().to_vec(),
        });
    }
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs.data()[label].as_f64().max(PROB_FLOOR);
    let mut grad = probs.clone();
    grad.data_mut()[label] -= T::one();
    Ok((-p.ln(), grad))
}

pub struct BatchLoss<T: Scalar> {
    /// Mean loss over the batch.
    pub loss: f64,
    pub probs: Tensor<T>,
    /// Gradient of the mean loss with respect to the logits.
    pub logit_grad: Tensor<T>,
}

/// Softmax + mean cross-entropy over `[batch, classes]` logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<BatchLoss<T>> {
    let [batch, classes] = *logits.shape() else {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            expected: vec![labels.len(), 2],
            actual: logits.shape().to_vec(),
        });
    };
    if batch != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy labels",
            expected: vec![batch],
            actual: vec![labels.len()],
        });
    }
    let mut probs = logits.clone();
    let mut grad = Vec::with_capacity(logits.len());
    let mut total = 0.0;
    let inv_batch = T::from_f64_lossy(1.0 / batch as f64);
    for (row, &label) in probs.data_mut().chunks_mut(classes).zip(labels) {
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        softmax_in_place(row);
        total -= row[label].as_f64().max(PROB_FLOOR).ln();
        for (c, &p) in row.iter().enumerate() {
            let g = if c == label { p - T::one() } else { p };
            grad.push(g * inv_batch);
        }
    }
    Ok(BatchLoss {
        loss: total / batch as f64,
        logit_grad: Tensor::new(logits.shape().to_vec(), grad)?,
        probs,
    })
}
