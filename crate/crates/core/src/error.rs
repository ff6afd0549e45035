use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}: backward called without a cached training forward pass")]
    MissingCache(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}: line {line}: {msg}")]
    Csv { path: PathBuf, line: usize, msg: String },

    #[error("empty session")]
    EmptySession,

    #[error("session has {len} samples, shorter than the window length {window}")]
    SessionTooShort { len: usize, window: usize },

    #[error("no window has a majority of labelled samples")]
    NoLabelledWindows,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate channel {channel}: zero variance")]
    DegenerateChannel { channel: usize },

    #[error("dataset contains only class {present}; {hint}")]
    SingleClass { present: usize, hint: &'static str },

    #[error("window length {got} is too short for this network (minimum {min})")]
    WindowTooShort { min: usize, got: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("not a model container (bad magic)")]
    BadMagic,

    #[error("unsupported container version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("container truncated")]
    Truncated,

    #[error("container checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("frozen layer {layer} differs from the base model")]
    FrozenLayerMismatch { layer: usize },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownConfigKey { key: String, line: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("live mode needs an interactive terminal; use `predict` for batch inference")]
    NotInteractive,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
