//! 1D convolution (valid padding, strided) lowered to GEMM through an im2col buffer.

use rand::Rng;

use super::init::he_uniform;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T: Scalar = f32> {
    /// `[out_channels, in_channels, kernel_size]`
    pub weight: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    stride: usize,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// im2col buffer plus the geometry needed to scatter gradients back.
#[derive(Debug, Clone)]
pub(crate) struct ConvCache<T> {
    pub col: Vec<T>,
    pub batch: usize,
    pub in_len: usize,
    pub batched: bool,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 {
            return Err(Error::InvalidArgument(
                "conv1d channels, kernel_size and stride must be >= 1".into(),
            ));
        }
        Ok(Self {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel_size]),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            frozen: false,
        })
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        if weight.rank() != 3 || stride == 0 {
            return Err(Error::InvalidArgument(
                "conv1d weight must be [out, in, k] with stride >= 1".into(),
            ));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv1d bias",
                expected: vec![weight.shape()[0]],
                actual: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            stride,
            frozen: false,
        })
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let fan_in = self.in_channels() * self.kernel_size();
        he_uniform(self.weight.data_mut(), fan_in, rng);
        self.bias.fill(T::zero());
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.kernel_size()).then(|| (input_len - self.kernel_size()) / self.stride + 1)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Accepts `[in_ch, L]` or `[batch, in_ch, L]`; output keeps the input's rank.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub(crate) fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (batch, in_len, batched) = self.check_input(input)?;
        let out_len = self.output_len(in_len).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "conv1d input length {in_len} shorter than kernel {}",
                self.kernel_size()
            ))
        })?;
        let col = self.im2col(input.data(), batch, in_len, out_len);
        let (oc, ck, cols) = (
            self.out_channels(),
            self.in_channels() * self.kernel_size(),
            batch * out_len,
        );
        let mut mat = vec![T::zero(); oc * cols];
        gemm(
            oc,
            ck,
            cols,
            self.weight.data(),
            Layout::Normal,
            &col,
            Layout::Normal,
            T::zero(),
            &mut mat,
        );

        let mut out = vec![T::zero(); batch * oc * out_len];
        for b in 0..batch {
            for o in 0..oc {
                let bias = self.bias.data()[o];
                let src = &mat[o * cols + b * out_len..o * cols + (b + 1) * out_len];
                let dst = &mut out[(b * oc + o) * out_len..(b * oc + o + 1) * out_len];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        let shape = if batched {
            vec![batch, oc, out_len]
        } else {
            vec![oc, out_len]
        };
        let cache = ConvCache {
            col,
            batch,
            in_len,
            batched,
        };
        Ok((Tensor::new(shape, out)?, cache))
    }

    /// Gradients of a scalar loss given `upstream = dLoss/dOutput`. Parameter gradients are
    /// computed even for frozen layers; the optimizer is what ignores them.
    pub fn backward(&self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<ConvGrads<T>> {
        let (_, cache) = self.forward_cached(input)?;
        let (input_grad, weight, bias) = self.backward_cached(&cache, upstream, true, true)?;
        Ok(ConvGrads {
            input: input_grad.expect("requested"),
            weight: weight.expect("requested"),
            bias: bias.expect("requested"),
        })
    }

    #[allow(clippy::type_complexity)]
    pub(crate) fn backward_cached(
        &self,
        cache: &ConvCache<T>,
        upstream: &Tensor<T>,
        want_input: bool,
        want_params: bool,
    ) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>)> {
        let (batch, in_len) = (cache.batch, cache.in_len);
        let out_len = self.output_len(in_len).expect("cached forward validated length");
        let oc = self.out_channels();
        let (ic, k) = (self.in_channels(), self.kernel_size());
        let ck = ic * k;
        let cols = batch * out_len;
        let expected = if cache.batched {
            vec![batch, oc, out_len]
        } else {
            vec![oc, out_len]
        };
        if upstream.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "conv1d backward",
                expected,
                actual: upstream.shape().to_vec(),
            });
        }

        // [batch, oc, out_len] -> [oc, batch*out_len]
        let up = upstream.data();
        let mut dmat = vec![T::zero(); oc * cols];
        for b in 0..batch {
            for o in 0..oc {
                let src = &up[(b * oc + o) * out_len..(b * oc + o + 1) * out_len];
                dmat[o * cols + b * out_len..o * cols + (b + 1) * out_len].copy_from_slice(src);
            }
        }

        let (weight_grad, bias_grad) = if want_params {
            let mut dw = vec![T::zero(); oc * ck];
            gemm(
                oc,
                cols,
                ck,
                &dmat,
                Layout::Normal,
                &cache.col,
                Layout::Transposed,
                T::zero(),
                &mut dw,
            );
            let db: Vec<T> = (0..oc)
                .map(|o| dmat[o * cols..(o + 1) * cols].iter().copied().sum())
                .collect();
            (
                Some(Tensor::new(vec![oc, ic, k], dw)?),
                Some(Tensor::new(vec![oc], db)?),
            )
        } else {
            (None, None)
        };

        let input_grad = if want_input {
            let mut dcol = vec![T::zero(); ck * cols];
            gemm(
                ck,
                oc,
                cols,
                self.weight.data(),
                Layout::Transposed,
                &dmat,
                Layout::Normal,
                T::zero(),
                &mut dcol,
            );
            let mut dx = vec![T::zero(); batch * ic * in_len];
            for c in 0..ic {
                for tap in 0..k {
                    let row = &dcol[(c * k + tap) * cols..(c * k + tap + 1) * cols];
                    for b in 0..batch {
                        let base = (b * ic + c) * in_len + tap;
                        for t in 0..out_len {
                            dx[base + t * self.stride] += row[b * out_len + t];
                        }
                    }
                }
            }
            let shape = if cache.batched {
                vec![batch, ic, in_len]
            } else {
                vec![ic, in_len]
            };
            Some(Tensor::new(shape, dx)?)
        } else {
            None
        };
        Ok((input_grad, weight_grad, bias_grad))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, bool)> {
        let (batch, channels, len, batched) = match *input.shape() {
            [c, l] => (1, c, l, false),
            [b, c, l] => (b, c, l, true),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "conv1d forward",
                    expected: vec![self.in_channels(), self.kernel_size()],
                    actual: input.shape().to_vec(),
                })
            }
        };
        if channels != self.in_channels() || len < self.kernel_size() {
            let mut expected = vec![self.in_channels(), len.max(self.kernel_size())];
            if batched {
                expected.insert(0, batch);
            }
            return Err(Error::ShapeMismatch {
                op: "conv1d forward",
                expected,
                actual: input.shape().to_vec(),
            });
        }
        Ok((batch, len, batched))
    }

    /// `col[(c*k + tap), b*out_len + t] = x[b, c, t*stride + tap]`
    fn im2col(&self, x: &[T], batch: usize, in_len: usize, out_len: usize) -> Vec<T> {
        let (ic, k) = (self.in_channels(), self.kernel_size());
        let cols = batch * out_len;
        let mut col = vec![T::zero(); ic * k * cols];
        for c in 0..ic {
            for tap in 0..k {
                let row = &mut col[(c * k + tap) * cols..(c * k + tap + 1) * cols];
                for b in 0..batch {
                    let src = &x[(b * ic + c) * in_len + tap..];
                    let dst = &mut row[b * out_len..(b + 1) * out_len];
                    if self.stride == 1 {
                        dst.copy_from_slice(&src[..out_len]);
                    } else {
                        for (t, d) in dst.iter_mut().enumerate() {
                            *d = src[t * self.stride];
                        }
                    }
                }
            }
        }
        col
    }
}
