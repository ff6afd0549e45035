//! Central finite-difference gradient checking.
//!
//! Run it on an `f64` copy of the network (see [`Network::cast`]); in `f32` the
//! difference quotient is dominated by rounding for most parameters. Dropout runs in
//! inference mode. A perturbation that changes the ReLU/max-pool regime of the network
//! straddles a kink; the step for that coordinate is then shrunk by factors of ten (up to
//! `refine_steps` times) until both sides stay in the regime of the unperturbed point, and
//! the coordinate is skipped if that never happens.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::Mode;
use super::loss::softmax_cross_entropy;
use super::network::Network;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Scalar objective the check differentiates.
#[derive(Debug, Clone)]
pub enum CheckLoss<T: Scalar> {
    /// Mean softmax cross-entropy of the logits against class labels.
    CrossEntropy(Vec<usize>),
    /// `sum(r * logits)` for a fixed tensor `r` shaped like the logits.
    Projection(Tensor<T>),
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Checks at most this many randomly chosen coordinates per parameter tensor.
    pub max_per_tensor: Option<usize>,
    pub check_input: bool,
    pub seed: u64,
    /// How many times to shrink the step at a kink before giving up on the coordinate.
    pub refine_steps: u32,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_per_tensor: None,
            check_input: true,
            seed: 0,
            refine_steps: 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over checked coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Checked coordinates that needed a smaller step to stay clear of a kink.
    pub refined: usize,
    pub skipped_nonsmooth: usize,
    /// Location of the worst coordinate, e.g. `layer 3 weight[17]` or `input[5]`.
    pub worst: Option<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<T: Scalar>(net: &mut Network<T>, input: &Tensor<T>, loss: &CheckLoss<T>) -> Result<(f64, Tensor<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let logits = net.forward_train(input, Mode::Inference, &mut rng)?;
    match loss {
        CheckLoss::CrossEntropy(labels) => {
            let batch_logits = if logits.rank() == 1 {
                logits.clone().reshape(&[1, logits.len()])?
            } else {
                logits.clone()
            };
            let b = softmax_cross_entropy(&batch_logits, labels)?;
            Ok((b.loss, b.logit_grad.reshape(logits.shape())?))
        }
        CheckLoss::Projection(r) => {
            if r.shape() != logits.shape() {
                return Err(Error::ShapeMismatch {
                    op: "grad_check projection",
                    expected: logits.shape().to_vec(),
                    actual: r.shape().to_vec(),
                });
            }
            let l = r
                .data()
                .iter()
                .zip(logits.data())
                .map(|(a, b)| a.as_f64() * b.as_f64())
                .sum();
            Ok((l, r.clone()))
        }
    }
}

fn choose(len: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cap {
        Some(k) if k < len => {
            let mut v = sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compares backpropagated gradients of `loss` against central differences for every
/// parameter (all layers are treated as trainable) and optionally the input.
pub fn grad_check<T: Scalar>(
    network: &Network<T>,
    input: &Tensor<T>,
    loss: &CheckLoss<T>,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(options.eps > 0.0 && options.eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {}",
            options.eps
        )));
    }
    let mut net = network.clone();
    for layer in net.layers_mut() {
        layer.set_frozen(false);
    }
    let (_, dlogits) = evaluate(&mut net, input, loss)?;
    let signature = net.activation_signature();
    let input_grad = net.backward(&dlogits, options.check_input)?;

    let mut analytic: Vec<(usize, Tensor<T>, Tensor<T>)> = Vec::new();
    for i in 0..net.len() {
        if let Some((w, b)) = net.layer_grads(i) {
            analytic.push((i, w.clone(), b.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradCheckReport::default();

    // Central difference at the largest step (eps, eps/10, ...) that stays off kinks.
    let central = |report: &mut GradCheckReport,
                   analytic: f64,
                   loc: String,
                   loss_at: &mut dyn FnMut(T) -> Result<Option<f64>>|
     -> Result<()> {
        let mut step = options.eps;
        for attempt in 0..=options.refine_steps {
            let h = T::from_f64_lossy(step);
            if let (Some(p), Some(m)) = (loss_at(h)?, loss_at(-h)?) {
                let rel = relative_error(analytic, (p - m) / (2.0 * h.as_f64()));
                report.checked += 1;
                report.refined += usize::from(attempt > 0);
                if report.worst.is_none() || rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some(loc);
                }
                return Ok(());
            }
            step /= 10.0;
        }
        report.skipped_nonsmooth += 1;
        Ok(())
    };

    for (layer_idx, gw, gb) in &analytic {
        for (which, grad) in [("weight", gw), ("bias", gb)] {
            for idx in choose(grad.len(), options.max_per_tensor, &mut rng) {
                let mut loss_at = |delta: T| -> Result<Option<f64>> {
                    let (w, b) = params_mut(&mut net, *layer_idx);
                    let target = if which == "weight" { w } else { b };
                    let orig = target.data()[idx];
                    target.data_mut()[idx] = orig + delta;
                    let out = evaluate(&mut net, input, loss);
                    // read the regime before params_mut drops the caches
                    let same_regime = net.activation_signature() == signature;
                    let (w, b) = params_mut(&mut net, *layer_idx);
                    let target = if which == "weight" { w } else { b };
                    target.data_mut()[idx] = orig;
                    let (l, _) = out?;
                    Ok(same_regime.then_some(l))
                };
                central(
                    &mut report,
                    grad.data()[idx].as_f64(),
                    format!("layer {layer_idx} {which}[{idx}]"),
                    &mut loss_at,
                )?;
            }
        }
    }

    if let Some(ig) = input_grad {
        let mut x = input.clone();
        for idx in choose(x.len(), options.max_per_tensor, &mut rng) {
            let orig = x.data()[idx];
            let mut loss_at = |delta: T| -> Result<Option<f64>> {
                x.data_mut()[idx] = orig + delta;
                let out = evaluate(&mut net, &x, loss);
                x.data_mut()[idx] = orig;
                let (l, _) = out?;
                Ok((net.activation_signature() == signature).then_some(l))
            };
            central(
                &mut report,
                ig.data()[idx].as_f64(),
                format!("input[{idx}]"),
                &mut loss_at,
            )?;
        }
    }
    Ok(report)
}

fn params_mut<T: Scalar>(net: &mut Network<T>, layer: usize) -> (&mut Tensor<T>, &mut Tensor<T>) {
    use super::network::Layer;
    match &mut net.layers_mut()[layer] {
        Layer::Conv1d(c) => (&mut c.weight, &mut c.bias),
        Layer::Dense(d) => (&mut d.weight, &mut d.bias),
        _ => unreachable!("gradients only exist for parameterised layers"),
    }
}

/// Random tensor with entries uniform in `[-1, 1)`.
pub fn random_uniform<T: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-1.0..1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};

    #[test]
    fn zero_step_rejected() {
        let net = Network::<f64>::new(vec![Layer::Dense(Dense::new(2, 2).unwrap())]);
        let x = Tensor::zeros(&[2]);
        let opts = GradCheckOptions {
            eps: 0.0,
            ..Default::default()
        };
        let err = grad_check(&net, &x, &CheckLoss::CrossEntropy(vec![0]), &opts).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn linear_network_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = Dense::<f64>::new(6, 5).unwrap();
        a.init_he(&mut rng);
        let mut b = Dense::<f64>::new(5, 3).unwrap();
        b.init_he(&mut rng);
        let net = Network::new(vec![Layer::Dense(a), Layer::Dense(b)]);
        let x = random_uniform(&[4, 6], &mut rng);
        let r = random_uniform(&[4, 3], &mut rng);
        let rep = grad_check(&net, &x, &CheckLoss::Projection(r), &GradCheckOptions::default()).unwrap();
        assert_eq!(rep.skipped_nonsmooth, 0);
        assert!(rep.max_rel_error <= 1e-5, "{rep:?}");
        assert_eq!(rep.checked, 6 * 5 + 5 + 5 * 3 + 3 + 4 * 6);
    }

    #[test]
    fn parameters_behind_relu_are_checked() {
        use crate::nn::{Conv1d, MaxPool1d};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv1d::<f64>::new(2, 4, 3, 1).unwrap();
        conv.init_he(&mut rng);
        let net = Network::new(vec![
            Layer::Conv1d(conv),
            Layer::Relu,
            Layer::MaxPool1d(MaxPool1d::new(2, 2).unwrap()),
        ]);
        let x = random_uniform(&[2, 2, 12], &mut rng);
        let r = random_uniform(&[2, 4, 5], &mut rng);
        let rep = grad_check(&net, &x, &CheckLoss::Projection(r), &GradCheckOptions::default()).unwrap();
        assert_eq!(rep.checked + rep.skipped_nonsmooth, 4 * 2 * 3 + 4 + 2 * 2 * 12);
        assert!(rep.skipped_nonsmooth <= 2, "{rep:?}");
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
    }
}
