use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{
    PopulationSpec, SubjectProfile, DEFAULT_BASE_SEED, DEFAULT_STRIDE, DEFAULT_TARGET_SEED, DEFAULT_WINDOW,
};
use crate::error::{Error, Result};
use crate::model::{TrainConfig, HEAD_WIDTH};
use crate::nn::OptimizerKind;
use crate::transfer::{AdaptationSpec, FreezePolicy, FINETUNE_LR_SCALE};

/// Settings shared by every command, read from a `key = value` file and overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub window: usize,
    pub stride: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// `sgd` or `adam`.
    pub optimizer: String,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Cross-validation folds for `train`; 0 skips cross-validation.
    pub folds: usize,
    pub finetune_epochs: usize,
    /// Defaults to `lr` scaled down by ten when unset.
    pub finetune_lr: Option<f64>,
    pub hidden_width: usize,
    pub head_seed: u64,
    pub speed: f64,
    pub base_subjects: usize,
    pub target_subjects: usize,
    pub base_seed: u64,
    pub target_seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data_dir: PathBuf::from("data"),
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            epochs: train.epochs,
            lr: train.learning_rate,
            batch: train.batch_size,
            optimizer: "sgd".into(),
            momentum: 0.9,
            seed: train.seed,
            shuffle: train.shuffle,
            folds: 10,
            finetune_epochs: train.epochs,
            finetune_lr: None,
            hidden_width: HEAD_WIDTH,
            head_seed: 7,
            speed: 1.0,
            base_subjects: 20,
            target_subjects: 3,
            base_seed: DEFAULT_BASE_SEED,
            target_seed: DEFAULT_TARGET_SEED,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid value `{value}` for `{key}`")))
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Blank lines and `#` comments are ignored; unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "window" => self.window = parse_value(key, value, line)?,
            "stride" => self.stride = parse_value(key, value, line)?,
            "epochs" => self.epochs = parse_value(key, value, line)?,
            "lr" => self.lr = parse_value(key, value, line)?,
            "batch" => self.batch = parse_value(key, value, line)?,
            "optimizer" => self.optimizer = value.to_ascii_lowercase(),
            "momentum" => self.momentum = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "shuffle" => self.shuffle = parse_value(key, value, line)?,
            "folds" => self.folds = parse_value(key, value, line)?,
            "finetune_epochs" => self.finetune_epochs = parse_value(key, value, line)?,
            "finetune_lr" => self.finetune_lr = Some(parse_value(key, value, line)?),
            "hidden_width" => self.hidden_width = parse_value(key, value, line)?,
            "head_seed" => self.head_seed = parse_value(key, value, line)?,
            "speed" => self.speed = parse_value(key, value, line)?,
            "base_subjects" => self.base_subjects = parse_value(key, value, line)?,
            "target_subjects" => self.target_subjects = parse_value(key, value, line)?,
            "base_seed" => self.base_seed = parse_value(key, value, line)?,
            "target_seed" => self.target_seed = parse_value(key, value, line)?,
            _ => {
                return Err(Error::UnknownConfigKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be >= 1".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::Config(format!("speed must be > 0, got {}", self.speed)));
        }
        if self.folds == 1 {
            return Err(Error::Config("folds must be 0 (no cross-validation) or >= 2".into()));
        }
        self.optimizer_kind()?;
        self.train_config().validate()?;
        self.adaptation()?.finetune.validate()
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        match self.optimizer.as_str() {
            "sgd" => Ok(OptimizerKind::Sgd {
                momentum: self.momentum,
            }),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd or adam)"
            ))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            optimizer: self.optimizer_kind().unwrap_or_default(),
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }

    pub fn finetune_lr(&self) -> f64 {
        self.finetune_lr.unwrap_or(self.lr * FINETUNE_LR_SCALE)
    }

    pub fn adaptation(&self) -> Result<AdaptationSpec> {
        Ok(AdaptationSpec {
            hidden_width: self.hidden_width,
            freeze: FreezePolicy::ConvLayers,
            head_seed: self.head_seed,
            finetune: TrainConfig {
                epochs: self.finetune_epochs,
                learning_rate: self.finetune_lr(),
                ..self.train_config()
            },
        })
    }

    pub fn base_population(&self) -> Vec<SubjectProfile> {
        PopulationSpec::base().sample(self.base_subjects, "subject", self.base_seed)
    }

    pub fn target_population(&self) -> Vec<SubjectProfile> {
        PopulationSpec::target().sample(self.target_subjects, "user", self.target_seed)
    }

    /// Every key with its effective value, in a form [`CliConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("data_dir", self.data_dir.display().to_string());
        kv("window", self.window.to_string());
        kv("stride", self.stride.to_string());
        kv("epochs", self.epochs.to_string());
        kv("lr", self.lr.to_string());
        kv("batch", self.batch.to_string());
        kv("optimizer", self.optimizer.clone());
        kv("momentum", self.momentum.to_string());
        kv("seed", self.seed.to_string());
        kv("shuffle", self.shuffle.to_string());
        kv("folds", self.folds.to_string());
        kv("finetune_epochs", self.finetune_epochs.to_string());
        kv("finetune_lr", self.finetune_lr().to_string());
        kv("hidden_width", self.hidden_width.to_string());
        kv("head_seed", self.head_seed.to_string());
        kv("speed", self.speed.to_string());
        kv("base_subjects", self.base_subjects.to_string());
        kv("target_subjects", self.target_subjects.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("target_seed", self.target_seed.to_string());
        out
    }
}
