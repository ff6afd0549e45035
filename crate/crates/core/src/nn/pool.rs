use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Channel-wise 1D max pooling. Ties resolve to the earliest position in the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pool_size: usize,
    stride: usize,
}

impl MaxPool1d {
    pub fn new(pool_size: usize, stride: usize) -> Result<Self> {
        if pool_size == 0 || stride == 0 {
            return Err(Error::InvalidArgument("max-pool size and stride must be >= 1".into()));
        }
        Ok(Self { pool_size, stride })
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.pool_size).then(|| (input_len - self.pool_size) / self.stride + 1)
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_with_argmax(input).map(|(out, _)| out)
    }

    /// Returns the pooled tensor and, per output element, the flat input index that won.
    pub fn forward_with_argmax<T: Scalar>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let shape = input.shape();
        let len = *shape
            .last()
            .filter(|_| shape.len() >= 2)
            .ok_or_else(|| Error::ShapeMismatch {
                op: "maxpool1d forward",
                expected: vec![1, self.pool_size],
                actual: shape.to_vec(),
            })?;
        let out_len = self.output_len(len).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "max-pool input length {len} shorter than pool size {}",
                self.pool_size
            ))
        })?;
        let rows = input.len() / len;
        let x = input.data();
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            let row = &x[r * len..(r + 1) * len];
            for t in 0..out_len {
                let start = t * self.stride;
                let mut best = start;
                for i in start + 1..start + self.pool_size {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().expect("rank >= 2") = out_len;
        Ok((Tensor::new(out_shape, out)?, argmax))
    }

    /// Routes each upstream gradient to the input position recorded in `argmax`.
    pub fn backward<T: Scalar>(
        &self,
        argmax: &[usize],
        input_shape: &[usize],
        upstream: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if upstream.len() != argmax.len() {
            return Err(Error::ShapeMismatch {
                op: "maxpool1d backward",
                expected: vec![argmax.len()],
                actual: upstream.shape().to_vec(),
            });
        }
        let mut dx = Tensor::zeros(input_shape);
        let d = dx.data_mut();
        for (&idx, &g) in argmax.iter().zip(upstream.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }
}
