//! Mini-batch training and k-fold cross-validation.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, build_base_model, StressNet};
use crate::data::{apply_normalizer, fit_normalizer, kfold_split, WindowedDataset};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Mode, Optimizer, OptimizerKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: OptimizerKind::default(),
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Cross-validation fold, 0 for a plain training run.
    pub fold: usize,
    pub epoch: usize,
    /// Mean training cross-entropy.
    pub loss: f64,
    /// Training accuracy with dropout active.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Held-out accuracy per fold; empty for a plain training run.
    pub fold_accuracies: Vec<f64>,
    pub wall_time: Duration,
}

impl TrainReport {
    /// Arithmetic mean of the fold accuracies.
    pub fn mean_accuracy(&self) -> Option<f64> {
        (!self.fold_accuracies.is_empty())
            .then(|| self.fold_accuracies.iter().sum::<f64>() / self.fold_accuracies.len() as f64)
    }

    pub fn final_epoch(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// `section,fold,epoch,loss,accuracy` rows. Wall time is left out so that reruns
    /// compare byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,fold,epoch,loss,accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "epoch,{},{},{:.6},{:.6}", e.fold, e.epoch, e.loss, e.accuracy);
        }
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            let _ = writeln!(out, "fold,{i},,,{a:.6}");
        }
        if let Some(m) = self.mean_accuracy() {
            let _ = writeln!(out, "mean,,,,{m:.6}");
        }
        out
    }
}

fn require_both_classes(dataset: &WindowedDataset, hint: &'static str) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match dataset.class_counts() {
        [0, _] => Err(Error::SingleClass { present: 1, hint }),
        [_, 0] => Err(Error::SingleClass { present: 0, hint }),
        _ => Ok(()),
    }
}

/// Trains `model` in place on a normalised dataset and adopts its normalisation.
///
/// Leading layers that are frozen (or parameterless) are evaluated once up front and
/// their outputs reused every epoch; backpropagation stops at the lowest trainable layer.
pub fn train(model: &mut StressNet, dataset: &WindowedDataset, config: &TrainConfig) -> Result<TrainReport> {
    train_fold(model, dataset, config, 0)
}

fn train_fold(
    model: &mut StressNet,
    dataset: &WindowedDataset,
    config: &TrainConfig,
    fold: usize,
) -> Result<TrainReport> {
    let started = Instant::now();
    config.validate()?;
    require_both_classes(dataset, "training needs windows of both classes")?;
    let stats = *dataset
        .norm_stats()
        .ok_or_else(|| Error::InvalidArgument("training data must be normalised first".into()))?;
    if dataset.window_len() != model.window_len {
        return Err(Error::ShapeMismatch {
            op: "train",
            expected: vec![model.window_len],
            actual: vec![dataset.window_len()],
        });
    }
    model.norm_stats = Some(stats);
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        report.wall_time = started.elapsed();
        return Ok(report);
    }

    let net = &mut model.network;
    let prefix = net.frozen_prefix_len();
    let features: Tensor<f32> = if prefix == 0 {
        dataset.windows().clone()
    } else {
        precompute(net, prefix, dataset.windows())?
    };
    let labels = dataset.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch_no, idx) in order.chunks(config.batch_size).enumerate() {
            let x = features.gather_outer(idx)?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let logits = net.forward_train_from(prefix, &x, Mode::Train, &mut rng)?;
            let batch = softmax_cross_entropy(&logits, &y)?;
            if !batch.loss.is_finite() || !logits.all_finite() {
                return Err(Error::NanLoss {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
            loss_sum += batch.loss * idx.len() as f64;
            correct += batch
                .probs
                .data()
                .chunks(2)
                .zip(&y)
                .filter(|(p, &label)| argmax(p) == label)
                .count();
            net.zero_grad();
            net.backward(&batch.logit_grad, false)?;
            optimizer.step(net)?;
        }
        net.clear_caches();
        report.epochs.push(EpochStats {
            fold,
            epoch: epoch + 1,
            loss: loss_sum / labels.len() as f64,
            accuracy: correct as f64 / labels.len() as f64,
        });
    }
    net.zero_grad();
    report.wall_time = started.elapsed();
    Ok(report)
}

fn precompute(net: &crate::nn::Network<f32>, prefix: usize, windows: &Tensor<f32>) -> Result<Tensor<f32>> {
    const CHUNK: usize = 256;
    let n = windows.shape()[0];
    let mut parts = Vec::new();
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        parts.push(net.forward_range(0..prefix, &windows.gather_outer(&idx)?)?);
    }
    let refs: Vec<&Tensor<f32>> = parts.iter().collect();
    concat_outer(&refs)
}

fn concat_outer(parts: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = parts.first().ok_or(Error::EmptyDataset)?;
    let mut shape = first.shape().to_vec();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(shape, data)
}

/// Fraction of windows of a dataset (normalised with the model's statistics) classified
/// correctly.
pub(crate) fn accuracy(model: &StressNet, dataset: &WindowedDataset) -> Result<f64> {
    let predicted = model.predict_classes(dataset.windows())?;
    let correct = predicted.iter().zip(dataset.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / dataset.len() as f64)
}

/// k-fold cross-validation of fresh default models on a raw (unnormalised) dataset. Each
/// fold fits its own normaliser on its training portion; fold `f` initialises and shuffles
/// with `config.seed + f`.
pub fn cross_validate(dataset: &WindowedDataset, config: &TrainConfig, k: usize) -> Result<TrainReport> {
    cross_validate_with(dataset, config, k, |seed| build_base_model(dataset.window_len(), seed))
}

/// [`cross_validate`] with a custom model constructor, called with each fold's seed.
pub fn cross_validate_with(
    dataset: &WindowedDataset,
    config: &TrainConfig,
    k: usize,
    mut build: impl FnMut(u64) -> Result<StressNet>,
) -> Result<TrainReport> {
    let started = Instant::now();
    if dataset.norm_stats().is_some() {
        return Err(Error::InvalidArgument(
            "cross-validation expects raw data; normalisation is fitted per fold".into(),
        ));
    }
    let folds = kfold_split(dataset.len(), k, config.seed)?;
    let mut report = TrainReport::default();
    for (f, fold) in folds.iter().enumerate() {
        let train_raw = dataset.subset(&fold.train)?;
        let stats = fit_normalizer(&train_raw)?;
        let train_set = apply_normalizer(&train_raw, &stats)?;
        let test_set = apply_normalizer(&dataset.subset(&fold.test)?, &stats)?;
        let seed = config.seed.wrapping_add(f as u64);
        let mut model = build(seed)?;
        let fold_config = TrainConfig { seed, ..config.clone() };
        let r = train_fold(&mut model, &train_set, &fold_config, f)?;
        report.epochs.extend(r.epochs);
        report.fold_accuracies.push(accuracy(&model, &test_set)?);
    }
    report.wall_time = started.elapsed();
    Ok(report)
}
