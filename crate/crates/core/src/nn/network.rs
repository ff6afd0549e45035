//! Ordered layer stacks with cached training forward passes and backpropagation.
//!
//! A [`Network`] owns per-layer caches, so training is single-writer. The `&self`
//! inference paths ([`Network::forward`], [`Network::logits`]) touch no caches and can be
//! shared between threads.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use rand::Rng;

use super::activation::{relu_backward, relu_forward, softmax, softmax_backward, Dropout, Mode};
use super::conv::{Conv1d, ConvCache};
use super::dense::Dense;
use super::pool::MaxPool1d;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Scalar = f32> {
    Conv1d(Conv1d<T>),
    MaxPool1d(MaxPool1d),
    Relu,
    Flatten,
    Dropout(Dropout),
    Dense(Dense<T>),
    Softmax,
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dropout(_) => "dropout",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    pub fn has_params(&self) -> bool {
        self.param_count() > 0
    }

    pub fn is_frozen(&self) -> bool {
        match self {
            Layer::Conv1d(c) => c.frozen,
            Layer::Dense(d) => d.frozen,
            _ => false,
        }
    }

    /// No-op for parameterless layers.
    pub fn set_frozen(&mut self, frozen: bool) {
        match self {
            Layer::Conv1d(c) => c.frozen = frozen,
            Layer::Dense(d) => d.frozen = frozen,
            _ => {}
        }
    }

    /// `(weight, bias)` for parameterised layers.
    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv1d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Conv1d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            op: "layer shape",
            expected,
            actual: input.to_vec(),
        };
        match self {
            Layer::Conv1d(c) => match *input {
                [ch, len] if ch == c.in_channels() => c
                    .output_len(len)
                    .map(|l| vec![c.out_channels(), l])
                    .ok_or_else(|| mismatch(vec![ch, c.kernel_size()])),
                _ => Err(mismatch(vec![c.in_channels(), c.kernel_size()])),
            },
            Layer::MaxPool1d(p) => match *input {
                [ch, len] => p
                    .output_len(len)
                    .map(|l| vec![ch, l])
                    .ok_or_else(|| mismatch(vec![ch, p.pool_size()])),
                _ => Err(mismatch(vec![1, p.pool_size()])),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => match *input {
                [f] if f == d.in_units() => Ok(vec![d.out_units()]),
                _ => Err(mismatch(vec![d.in_units()])),
            },
            Layer::Relu | Layer::Dropout(_) | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match self {
            Layer::Conv1d(c) => c.forward(x)?,
            Layer::MaxPool1d(p) => p.forward(x)?,
            Layer::Relu => relu_forward(x),
            Layer::Flatten => flatten(x)?,
            Layer::Dropout(_) => x.clone(),
            Layer::Dense(d) => d.forward(x)?,
            Layer::Softmax => softmax(x),
        })
    }
}

fn flatten<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = match *x.shape() {
        [b, c, l] => vec![b, c * l],
        [c, l] => vec![c * l],
        [f] => vec![f],
        _ => {
            return Err(Error::ShapeMismatch {
                op: "flatten",
                expected: vec![1, 1],
                actual: x.shape().to_vec(),
            })
        }
    };
    x.clone().reshape(&shape)
}

#[derive(Debug, Clone)]
enum Cache<T: Scalar> {
    Conv(ConvCache<T>),
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Relu(Tensor<T>),
    Flatten(Vec<usize>),
    Dropout(Option<Vec<bool>>),
    Dense(Tensor<T>),
    Softmax(Tensor<T>),
}

/// Mutable view of one parameter tensor and its accumulated gradient.
pub struct ParamSlot<'a, T: Scalar> {
    pub value: &'a mut Tensor<T>,
    pub grad: Option<&'a Tensor<T>>,
    pub frozen: bool,
}

#[derive(Debug)]
pub struct Network<T: Scalar = f32> {
    layers: Vec<Layer<T>>,
    caches: Vec<Option<Cache<T>>>,
    grads: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Clone for Network<T> {
    /// Clones the architecture and parameters; caches and gradients are not carried over.
    fn clone(&self) -> Self {
        Self::new(self.layers.clone())
    }
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        let n = layers.len();
        Self {
            layers,
            caches: vec![None; n],
            grads: vec![None; n],
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.clear_caches();
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer<T>> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Checks layer compatibility for a per-example input shape and returns the output shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(input.to_vec(), |shape, layer| layer.output_shape(&shape))
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv1d(c) => {
                    let mut out =
                        Conv1d::from_parts(c.weight.cast(), c.bias.cast(), c.stride()).expect("valid source layer");
                    out.frozen = c.frozen;
                    Layer::Conv1d(out)
                }
                Layer::Dense(d) => {
                    let mut out = Dense::from_parts(d.weight.cast(), d.bias.cast()).expect("valid source layer");
                    out.frozen = d.frozen;
                    Layer::Dense(out)
                }
                Layer::MaxPool1d(p) => Layer::MaxPool1d(*p),
                Layer::Relu => Layer::Relu,
                Layer::Flatten => Layer::Flatten,
                Layer::Dropout(d) => Layer::Dropout(*d),
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Network::new(layers)
    }

    /// End of the layers that produce logits (a trailing softmax is excluded).
    pub fn logits_end(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Inference through every layer, dropout disabled.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_range(0..self.layers.len(), input)
    }

    /// Inference up to the logits.
    pub fn logits(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_range(0..self.logits_end(), input)
    }

    pub fn forward_range(&self, range: Range<usize>, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.layers[range] {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Number of leading layers whose output is a fixed function of the input during
    /// training: frozen or parameterless, and not dropout.
    pub fn frozen_prefix_len(&self) -> usize {
        self.layers[..self.logits_end()]
            .iter()
            .take_while(|l| !matches!(l, Layer::Dropout(_)) && (!l.has_params() || l.is_frozen()))
            .count()
    }

    /// Cached forward pass to the logits, as needed by [`Network::backward`].
    pub fn forward_train(&mut self, input: &Tensor<T>, mode: Mode, rng: &mut impl Rng) -> Result<Tensor<T>> {
        self.forward_train_from(0, input, mode, rng)
    }

    /// Cached forward pass starting at layer `start`; `input` is that layer's input.
    pub fn forward_train_from(
        &mut self,
        start: usize,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Tensor<T>> {
        let end = self.logits_end();
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "start layer {start} beyond logits layer {end}"
            )));
        }
        self.clear_caches();
        let mut x = input.clone();
        for i in start..end {
            let (out, cache) = match &self.layers[i] {
                Layer::Conv1d(c) => {
                    let (out, cache) = c.forward_cached(&x)?;
                    (out, Cache::Conv(cache))
                }
                Layer::MaxPool1d(p) => {
                    let (out, argmax) = p.forward_with_argmax(&x)?;
                    (
                        out,
                        Cache::Pool {
                            argmax,
                            in_shape: x.shape().to_vec(),
                        },
                    )
                }
                Layer::Relu => (relu_forward(&x), Cache::Relu(x)),
                Layer::Flatten => (flatten(&x)?, Cache::Flatten(x.shape().to_vec())),
                Layer::Dropout(d) => {
                    let (out, mask) = d.forward(&x, mode, rng);
                    (out, Cache::Dropout(mask))
                }
                Layer::Dense(d) => (d.forward(&x)?, Cache::Dense(x)),
                Layer::Softmax => {
                    let out = softmax(&x);
                    (out.clone(), Cache::Softmax(out))
                }
            };
            self.caches[i] = Some(cache);
            x = out;
        }
        Ok(x)
    }

    /// Backpropagates `grad` (gradient with respect to the logits) through the cached pass,
    /// accumulating parameter gradients of unfrozen layers.
    ///
    /// Propagation stops at the lowest layer that still needs a gradient; the input gradient
    /// is returned only when `want_input` is set.
    pub fn backward(&mut self, grad: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>> {
        let end = self.logits_end();
        let first_cached = self.caches[..end]
            .iter()
            .position(Option::is_some)
            .ok_or(Error::MissingCache("network"))?;
        let stop = if want_input {
            first_cached
        } else {
            match (first_cached..end).find(|&i| self.layers[i].has_params() && !self.layers[i].is_frozen()) {
                Some(i) => i,
                None => return Ok(None),
            }
        };

        let mut g = grad.clone();
        for i in (stop..end).rev() {
            let need_input = want_input || i > stop;
            let cache = self.caches[i]
                .as_ref()
                .ok_or(Error::MissingCache(self.layers[i].name()))?;
            let layer = &self.layers[i];
            let train_params = layer.has_params() && !layer.is_frozen();
            g = match (layer, cache) {
                (Layer::Conv1d(c), Cache::Conv(cc)) => {
                    let (dx, dw, db) = c.backward_cached(cc, &g, need_input, train_params)?;
                    if let (Some(dw), Some(db)) = (dw, db) {
                        accumulate(&mut self.grads[i], dw, db);
                    }
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (Layer::Dense(d), Cache::Dense(input)) => {
                    let (dx, dw, db) = d.backward_parts(input, &g, need_input, train_params)?;
                    if let (Some(dw), Some(db)) = (dw, db) {
                        accumulate(&mut self.grads[i], dw, db);
                    }
                    match dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (Layer::MaxPool1d(p), Cache::Pool { argmax, in_shape }) => p.backward(argmax, in_shape, &g)?,
                (Layer::Relu, Cache::Relu(input)) => relu_backward(input, &g)?,
                (Layer::Flatten, Cache::Flatten(shape)) => g.reshape(shape)?,
                (Layer::Dropout(d), Cache::Dropout(mask)) => d.backward(mask.as_deref(), &g)?,
                (Layer::Softmax, Cache::Softmax(out)) => softmax_backward(out, &g)?,
                _ => return Err(Error::MissingCache(layer.name())),
            };
        }
        Ok(want_input.then_some(g))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn clear_caches(&mut self) {
        self.caches.iter_mut().for_each(|c| *c = None);
    }

    /// Accumulated `(weight_grad, bias_grad)` of layer `i`, if any.
    pub fn layer_grads(&self, i: usize) -> Option<(&Tensor<T>, &Tensor<T>)> {
        self.grads.get(i)?.as_ref().map(|(w, b)| (w, b))
    }

    /// Parameter tensors in layer order (weight before bias) paired with their gradients.
    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_, T>> {
        let mut out = Vec::new();
        for (layer, grad) in self.layers.iter_mut().zip(&self.grads) {
            let frozen = layer.is_frozen();
            if let Some((w, b)) = layer.params_mut() {
                let (gw, gb) = match grad {
                    Some((gw, gb)) => (Some(gw), Some(gb)),
                    None => (None, None),
                };
                out.push(ParamSlot {
                    value: w,
                    grad: gw,
                    frozen,
                });
                out.push(ParamSlot {
                    value: b,
                    grad: gb,
                    frozen,
                });
            }
        }
        out
    }

    /// Fingerprint of the piecewise-linear regime of the last cached pass: ReLU input signs
    /// and max-pool winners. Two passes with equal signatures lie on the same linear piece.
    pub fn activation_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for cache in self.caches.iter().flatten() {
            match cache {
                Cache::Relu(x) => {
                    for v in x.data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Cache::Pool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<(Tensor<T>, Tensor<T>)>, dw: Tensor<T>, db: Tensor<T>) {
    match slot {
        Some((w, b)) => {
            for (a, g) in w.data_mut().iter_mut().zip(dw.data()) {
                *a += *g;
            }
            for (a, g) in b.data_mut().iter_mut().zip(db.data()) {
                *a += *g;
            }
        }
        None => *slot = Some((dw, db)),
    }
}
