//! Fixed-length sliding windows over sessions.

use super::session::{Label, Session};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel order inside every window: heart rate, HRV, EDA.
pub const CHANNELS: usize = 3;
/// 400 samples at 30 Hz, about 13.3 s.
pub const DEFAULT_WINDOW: usize = 400;
pub const DEFAULT_STRIDE: usize = 100;

/// Per-channel z-score statistics, stored in `f32` as they are in model files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f32; CHANNELS],
    pub std: [f32; CHANNELS],
}

/// Labelled windows `[N, 3, W]`. `norm_stats` records the normalisation already applied,
/// if any.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    windows: Tensor<f32>,
    labels: Vec<usize>,
    norm_stats: Option<NormStats>,
}

/// `floor((len - window) / stride) + 1`, or 0 when the session is too short.
pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || len < window {
        0
    } else {
        (len - window) / stride + 1
    }
}

fn check_geometry(session: &Session, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "window length and stride must be >= 1 (got {window}, {stride})"
        )));
    }
    if session.len() < window {
        return Err(Error::SessionTooShort {
            len: session.len(),
            window,
        });
    }
    Ok(window_count(session.len(), window, stride))
}

fn fill_window(session: &Session, start: usize, window: usize, out: &mut Vec<f32>) {
    let samples = &session.samples[start..start + window];
    for ch in 0..CHANNELS {
        out.extend(samples.iter().map(|s| s.channels()[ch] as f32));
    }
}

/// Majority label among labelled samples (ties go to stressed); `None` when more than half
/// of the window is unlabeled.
pub fn window_label(labels: impl IntoIterator<Item = Label>) -> Option<usize> {
    let (mut relaxed, mut stressed, mut unlabeled) = (0usize, 0usize, 0usize);
    for l in labels {
        match l {
            Label::Relaxed => relaxed += 1,
            Label::Stressed => stressed += 1,
            Label::Unlabeled => unlabeled += 1,
        }
    }
    let total = relaxed + stressed + unlabeled;
    if total == 0 || unlabeled * 2 > total {
        return None;
    }
    Some(if stressed >= relaxed { 1 } else { 0 })
}

/// Every window position regardless of labels, as `[N, 3, W]` plus start sample indices.
pub fn sliding_windows(session: &Session, window: usize, stride: usize) -> Result<(Tensor<f32>, Vec<usize>)> {
    let n = check_geometry(session, window, stride)?;
    let mut data = Vec::with_capacity(n * CHANNELS * window);
    let starts: Vec<usize> = (0..n).map(|i| i * stride).collect();
    for &start in &starts {
        fill_window(session, start, window, &mut data);
    }
    Ok((Tensor::new(vec![n, CHANNELS, window], data)?, starts))
}

/// Labelled windows of a session. Windows that are mostly unlabeled are dropped.
pub fn segment_windows(session: &Session, window: usize, stride: usize) -> Result<WindowedDataset> {
    let n = check_geometry(session, window, stride)?;
    let mut data = Vec::with_capacity(n * CHANNELS * window);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let start = i * stride;
        let label = window_label(session.samples[start..start + window].iter().map(|s| s.label));
        if let Some(label) = label {
            fill_window(session, start, window, &mut data);
            labels.push(label);
        }
    }
    if labels.is_empty() {
        return Err(Error::NoLabelledWindows);
    }
    WindowedDataset::new(Tensor::new(vec![labels.len(), CHANNELS, window], data)?, labels)
}

/// Windows every session and pools the result.
pub fn segment_sessions(sessions: &[Session], window: usize, stride: usize) -> Result<WindowedDataset> {
    let parts = sessions
        .iter()
        .map(|s| segment_windows(s, window, stride))
        .collect::<Result<Vec<_>>>()?;
    WindowedDataset::concat(&parts)
}

impl WindowedDataset {
    pub fn new(windows: Tensor<f32>, labels: Vec<usize>) -> Result<Self> {
        if windows.rank() != 3 || windows.shape()[1] != CHANNELS {
            return Err(Error::ShapeMismatch {
                op: "windowed dataset",
                expected: vec![labels.len(), CHANNELS, DEFAULT_WINDOW],
                actual: windows.shape().to_vec(),
            });
        }
        if windows.shape()[0] != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} windows but {} labels",
                windows.shape()[0],
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("class label {bad} is not 0 or 1")));
        }
        Ok(Self {
            windows,
            labels,
            norm_stats: None,
        })
    }

    pub(crate) fn with_norm(mut self, stats: Option<NormStats>) -> Self {
        self.norm_stats = stats;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.windows.shape()[2]
    }

    pub fn windows(&self) -> &Tensor<f32> {
        &self.windows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm_stats.as_ref()
    }

    pub fn window(&self, i: usize) -> Tensor<f32> {
        self.windows.slice_outer(i)
    }

    /// `[relaxed, stressed]` window counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let stressed = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - stressed, stressed]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            windows: self.windows.gather_outer(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            norm_stats: self.norm_stats,
        })
    }

    pub fn concat(parts: &[WindowedDataset]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let w = first.window_len();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.window_len() != w || p.norm_stats != first.norm_stats {
                return Err(Error::InvalidArgument(
                    "cannot concatenate datasets with different window lengths or normalisation".into(),
                ));
            }
            data.extend_from_slice(p.windows.data());
            labels.extend_from_slice(&p.labels);
        }
        let windows = Tensor::new(vec![labels.len(), CHANNELS, w], data)?;
        Ok(Self::new(windows, labels)?.with_norm(first.norm_stats))
    }

    pub(crate) fn windows_mut(&mut self) -> &mut Tensor<f32> {
        &mut self.windows
    }
}
