//! Per-user personalisation: swap the classifier head, freeze the feature extractor and
//! fine-tune on a small labelled set from one user.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{apply_normalizer, fit_normalizer, stratified_split, Fold, NormStats, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, CrossMatrix, EvalReport};
use crate::model::{
    head_layers, init_layers, model_checksum, read_model_file, save_model_with, train, StressNet, TrainConfig,
    TrainReport, CLASS_COUNT, HEAD_WIDTH,
};
use crate::nn::{Layer, Network, OptimizerKind};

/// Share of each user's windows held out for testing.
pub const USER_TEST_FRACTION: f64 = 0.2;
/// Fine-tuning learning rate relative to base training.
pub const FINETUNE_LR_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FreezePolicy {
    /// Every convolution layer.
    ConvLayers,
    /// Exactly these layer indices.
    Layers(BTreeSet<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSpec {
    pub hidden_width: usize,
    pub freeze: FreezePolicy,
    /// Seed for the fresh head.
    pub head_seed: u64,
    pub finetune: TrainConfig,
}

impl Default for AdaptationSpec {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            hidden_width: HEAD_WIDTH,
            freeze: FreezePolicy::ConvLayers,
            head_seed: 7,
            finetune: TrainConfig {
                learning_rate: base.learning_rate * FINETUNE_LR_SCALE,
                ..base
            },
        }
    }
}

/// Where a personal model came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// Checksum of the base model (see [`model_checksum`]).
    pub base_checksum: u32,
    pub user_id: String,
    pub hidden_width: usize,
    pub frozen_layers: Vec<usize>,
    pub head_seed: u64,
    pub finetune: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalModel {
    pub model: StressNet,
    pub provenance: Provenance,
}

/// Replaces everything after `Flatten` (and the dropout right after it) with a fresh
/// `Dense(features -> hidden) -> ReLU -> Dense(hidden -> 2) -> Softmax` head and freezes
/// layers according to the spec. Parameters of the kept layers are copied unchanged.
pub fn adapt_head(base: &StressNet, spec: &AdaptationSpec, user_id: &str) -> Result<PersonalModel> {
    if spec.hidden_width == 0 {
        return Err(Error::InvalidArgument("adaptation hidden width must be >= 1".into()));
    }
    let stats = base
        .norm_stats
        .ok_or_else(|| Error::InvalidArgument("base model has no normalisation statistics".into()))?;
    let flatten = base
        .flatten_index()
        .ok_or_else(|| Error::InvalidArgument("base model has no flatten layer".into()))?;
    let mut keep = flatten + 1;
    if matches!(base.network.layers().get(keep), Some(Layer::Dropout(_))) {
        keep += 1;
    }
    let features = base.flatten_dim()?;
    let mut layers: Vec<Layer<f32>> = base.network.layers()[..keep].to_vec();
    layers.extend(head_layers(features, spec.hidden_width)?);
    init_layers(&mut layers, keep, spec.head_seed);

    let frozen: Vec<usize> = match &spec.freeze {
        FreezePolicy::ConvLayers => (0..keep).filter(|&i| matches!(layers[i], Layer::Conv1d(_))).collect(),
        FreezePolicy::Layers(set) => {
            if let Some(&bad) = set.iter().find(|&&i| i >= layers.len()) {
                return Err(Error::InvalidArgument(format!(
                    "freeze policy names layer {bad}, but the adapted model has {} layers",
                    layers.len()
                )));
            }
            set.iter().copied().collect()
        }
    };
    for (i, layer) in layers.iter_mut().enumerate() {
        layer.set_frozen(frozen.contains(&i));
    }

    Ok(PersonalModel {
        model: StressNet::new(Network::new(layers), base.window_len, Some(stats))?,
        provenance: Provenance {
            base_checksum: model_checksum(base, &stats),
            user_id: user_id.to_string(),
            hidden_width: spec.hidden_width,
            frozen_layers: frozen,
            head_seed: spec.head_seed,
            finetune: spec.finetune.clone(),
        },
    })
}

/// The seeded stratified 80/20 split used for a user's data: `(train, test)` raw subsets
/// plus the indices.
pub fn user_split(user_data: &WindowedDataset, seed: u64) -> Result<(WindowedDataset, WindowedDataset, Fold)> {
    let fold = stratified_split(user_data.labels(), USER_TEST_FRACTION, seed)?;
    Ok((user_data.subset(&fold.train)?, user_data.subset(&fold.test)?, fold))
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub personal: PersonalModel,
    pub report: TrainReport,
    /// Personalised model on the user's held-out windows.
    pub held_out: EvalReport,
    /// Held-out windows, unnormalised.
    pub test_data: WindowedDataset,
    pub split: Fold,
}

const LABEL_HINT: &str = "label more windows of the missing state before fine-tuning";

/// Fine-tunes the unfrozen layers on raw user windows. The data is split 80/20 (stratified,
/// seeded with `config.seed`), the normaliser is refit on the training part, and the
/// returned model carries those user statistics.
pub fn finetune(
    personal: &PersonalModel,
    user_data: &WindowedDataset,
    config: &TrainConfig,
) -> Result<FinetuneOutcome> {
    if user_data.norm_stats().is_some() {
        return Err(Error::InvalidArgument("fine-tuning expects raw user windows".into()));
    }
    match user_data.class_counts() {
        [0, 0] => return Err(Error::EmptyDataset),
        [0, _] => {
            return Err(Error::SingleClass {
                present: 1,
                hint: LABEL_HINT,
            })
        }
        [_, 0] => {
            return Err(Error::SingleClass {
                present: 0,
                hint: LABEL_HINT,
            })
        }
        _ => {}
    }
    let (train_raw, test_raw, split) = user_split(user_data, config.seed)?;
    let stats = fit_normalizer(&train_raw)?;
    let train_set = apply_normalizer(&train_raw, &stats)?;

    let mut tuned = personal.clone();
    tuned.provenance.finetune = config.clone();
    let report = train(&mut tuned.model, &train_set, config)?;
    let held_out = evaluate(&tuned.model, &test_raw)?;
    Ok(FinetuneOutcome {
        personal: tuned,
        report,
        held_out,
        test_data: test_raw,
        split,
    })
}

/// The unadapted base model on user windows, normalised with the base statistics.
pub fn baseline_on_target(base: &StressNet, user_data: &WindowedDataset) -> Result<EvalReport> {
    evaluate(base, user_data)
}

/// `values[i][j]` is the accuracy of `models[j]` on `datasets[i]` (raw held-out windows of
/// user `i`), each model applying its own normalisation.
pub fn cross_user_matrix(models: &[PersonalModel], datasets: &[WindowedDataset]) -> Result<CrossMatrix> {
    let mut values = Vec::with_capacity(datasets.len());
    for data in datasets {
        values.push(
            models
                .iter()
                .map(|m| evaluate(&m.model, data).map(|r| r.accuracy))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let labels: Vec<String> = models.iter().map(|m| m.provenance.user_id.clone()).collect();
    Ok(CrossMatrix {
        data_labels: labels.clone(),
        model_labels: labels,
        values,
    })
}

/// Checks that `personal` was derived from `base` and that every frozen layer still holds
/// the base parameters bit for bit.
pub fn verify_against_base(personal: &PersonalModel, base: &StressNet) -> Result<()> {
    let stats = base
        .norm_stats
        .ok_or_else(|| Error::InvalidArgument("base model has no normalisation statistics".into()))?;
    let checksum = model_checksum(base, &stats);
    if checksum != personal.provenance.base_checksum {
        return Err(Error::InvalidArgument(format!(
            "personal model was adapted from base {:08x}, not {checksum:08x}",
            personal.provenance.base_checksum
        )));
    }
    for &i in &personal.provenance.frozen_layers {
        let ours = personal.model.network.layers().get(i).and_then(Layer::params);
        let theirs = base.network.layers().get(i).and_then(Layer::params);
        let same = match (ours, theirs) {
            (Some((w1, b1)), Some((w2, b2))) => bits_equal(w1.data(), w2.data()) && bits_equal(b1.data(), b2.data()),
            (None, None) => true,
            _ => false,
        };
        if !same {
            return Err(Error::FrozenLayerMismatch { layer: i });
        }
    }
    Ok(())
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// CRC32 over the raw bits of every frozen parameter, in layer order.
pub fn frozen_checksum(model: &StressNet, frozen_layers: &[usize]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for &i in frozen_layers {
        if let Some((w, b)) = model.network.layers().get(i).and_then(Layer::params) {
            for v in w.data().iter().chain(b.data()) {
                h.update(&v.to_le_bytes());
            }
        }
    }
    h.finalize()
}

const PROVENANCE_TAG: &[u8; 4] = b"PROV";

fn optimizer_text(kind: OptimizerKind) -> String {
    match kind {
        OptimizerKind::Sgd { momentum } => format!("sgd:{momentum}"),
        OptimizerKind::Adam { beta1, beta2, epsilon } => format!("adam:{beta1}:{beta2}:{epsilon}"),
    }
}

fn parse_optimizer(s: &str) -> Option<OptimizerKind> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| parts.get(i)?.parse::<f64>().ok();
    match *parts.first()? {
        "sgd" if parts.len() == 2 => Some(OptimizerKind::Sgd { momentum: num(1)? }),
        "adam" if parts.len() == 4 => Some(OptimizerKind::Adam {
            beta1: num(1)?,
            beta2: num(2)?,
            epsilon: num(3)?,
        }),
        _ => None,
    }
}

impl Provenance {
    /// `PROV` followed by `key=value` lines.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.finetune;
        let mut text = String::new();
        let _ = writeln!(text, "base_checksum={:08x}", self.base_checksum);
        let _ = writeln!(text, "user_id={}", self.user_id);
        let _ = writeln!(text, "hidden_width={}", self.hidden_width);
        let frozen: Vec<String> = self.frozen_layers.iter().map(usize::to_string).collect();
        let _ = writeln!(text, "frozen_layers={}", frozen.join(" "));
        let _ = writeln!(text, "head_seed={}", self.head_seed);
        let _ = writeln!(text, "epochs={}", c.epochs);
        let _ = writeln!(text, "batch_size={}", c.batch_size);
        let _ = writeln!(text, "learning_rate={}", c.learning_rate);
        let _ = writeln!(text, "optimizer={}", optimizer_text(c.optimizer));
        let _ = writeln!(text, "seed={}", c.seed);
        let _ = writeln!(text, "shuffle={}", c.shuffle);
        let mut out = PROVENANCE_TAG.to_vec();
        out.extend_from_slice(text.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::CorruptContainer(format!("provenance: {m}"));
        let body = bytes
            .strip_prefix(&PROVENANCE_TAG[..])
            .ok_or_else(|| bad("missing tag"))?;
        let text = std::str::from_utf8(body).map_err(|_| bad("not UTF-8"))?;
        let mut map = std::collections::HashMap::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            map.insert(k, v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(&format!("missing {k}")));
        fn num<T: std::str::FromStr>(v: &str, k: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::CorruptContainer(format!("provenance: bad {k} `{v}`")))
        }
        Ok(Self {
            base_checksum: u32::from_str_radix(get("base_checksum")?, 16).map_err(|_| bad("base_checksum"))?,
            user_id: get("user_id")?.to_string(),
            hidden_width: num(get("hidden_width")?, "hidden_width")?,
            frozen_layers: get("frozen_layers")?
                .split_whitespace()
                .map(|v| num(v, "frozen_layers"))
                .collect::<Result<_>>()?,
            head_seed: num(get("head_seed")?, "head_seed")?,
            finetune: TrainConfig {
                epochs: num(get("epochs")?, "epochs")?,
                batch_size: num(get("batch_size")?, "batch_size")?,
                learning_rate: num(get("learning_rate")?, "learning_rate")?,
                optimizer: parse_optimizer(get("optimizer")?).ok_or_else(|| bad("optimizer"))?,
                seed: num(get("seed")?, "seed")?,
                shuffle: num(get("shuffle")?, "shuffle")?,
            },
        })
    }
}

pub fn save_personal(personal: &PersonalModel, path: impl AsRef<Path>) -> Result<()> {
    let stats: NormStats = personal
        .model
        .norm_stats
        .ok_or_else(|| Error::InvalidArgument("personal model has no normalisation statistics".into()))?;
    save_model_with(&personal.model, &stats, &personal.provenance.to_bytes(), path.as_ref())
}

pub fn load_personal(path: impl AsRef<Path>) -> Result<PersonalModel> {
    let file = read_model_file(path)?;
    let extra = file
        .extra
        .ok_or_else(|| Error::InvalidArgument("model file has no provenance block; not a personal model".into()))?;
    Ok(PersonalModel {
        model: file.model,
        provenance: Provenance::from_bytes(&extra)?,
    })
}

/// Number of parameters in a head for `features` inputs.
pub fn head_param_count(features: usize, hidden: usize) -> usize {
    features * hidden + hidden + hidden * CLASS_COUNT + CLASS_COUNT
}
