use rand::Rng;

use super::init::he_uniform;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Scalar, Tensor};

/// Fully connected layer, `y = W x + b` with `W: [out_units, in_units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_units: usize, out_units: usize) -> Result<Self> {
        if in_units == 0 || out_units == 0 {
            return Err(Error::InvalidArgument("dense units must be >= 1".into()));
        }
        Ok(Self {
            weight: Tensor::zeros(&[out_units, in_units]),
            bias: Tensor::zeros(&[out_units]),
            frozen: false,
        })
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::InvalidArgument("dense weight must be [out, in]".into()));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                expected: vec![weight.shape()[0]],
                actual: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            frozen: false,
        })
    }

    pub fn init_he(&mut self, rng: &mut impl Rng) {
        let fan_in = self.in_units();
        he_uniform(self.weight.data_mut(), fan_in, rng);
        self.bias.fill(T::zero());
    }

    pub fn in_units(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_units(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Accepts `[in]` or `[batch, in]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, batched) = self.check_input(input)?;
        let (fi, fo) = (self.in_units(), self.out_units());
        let mut out = Vec::with_capacity(batch * fo);
        for _ in 0..batch {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            batch,
            fi,
            fo,
            input.data(),
            Layout::Normal,
            self.weight.data(),
            Layout::Transposed,
            T::one(),
            &mut out,
        );
        let shape = if batched { vec![batch, fo] } else { vec![fo] };
        Tensor::new(shape, out)
    }

    pub fn backward(&self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<DenseGrads<T>> {
        let (input_grad, weight, bias) = self.backward_parts(input, upstream, true, true)?;
        Ok(DenseGrads {
            input: input_grad.expect("requested"),
            weight: weight.expect("requested"),
            bias: bias.expect("requested"),
        })
    }

    #[allow(clippy::type_complexity)]
    pub(crate) fn backward_parts(
        &self,
        input: &Tensor<T>,
        upstream: &Tensor<T>,
        want_input: bool,
        want_params: bool,
    ) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>)> {
        let (batch, batched) = self.check_input(input)?;
        let (fi, fo) = (self.in_units(), self.out_units());
        let expected = if batched { vec![batch, fo] } else { vec![fo] };
        if upstream.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                expected,
                actual: upstream.shape().to_vec(),
            });
        }
        let dy = upstream.data();
        let input_grad = if want_input {
            let mut dx = vec![T::zero(); batch * fi];
            gemm(
                batch,
                fo,
                fi,
                dy,
                Layout::Normal,
                self.weight.data(),
                Layout::Normal,
                T::zero(),
                &mut dx,
            );
            Some(Tensor::new(input.shape().to_vec(), dx)?)
        } else {
            None
        };
        let (wg, bg) = if want_params {
            let mut dw = vec![T::zero(); fo * fi];
            gemm(
                fo,
                batch,
                fi,
                dy,
                Layout::Transposed,
                input.data(),
                Layout::Normal,
                T::zero(),
                &mut dw,
            );
            let mut db = vec![T::zero(); fo];
            for row in dy.chunks(fo) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            (Some(Tensor::new(vec![fo, fi], dw)?), Some(Tensor::new(vec![fo], db)?))
        } else {
            (None, None)
        };
        Ok((input_grad, wg, bg))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, bool)> {
        match *input.shape() {
            [f] if f == self.in_units() => Ok((1, false)),
            [b, f] if f == self.in_units() => Ok((b, true)),
            _ => Err(Error::ShapeMismatch {
                op: "dense forward",
                expected: vec![self.in_units()],
                actual: input.shape().to_vec(),
            }),
        }
    }
}
