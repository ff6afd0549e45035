use super::window::{NormStats, WindowedDataset, CHANNELS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel mean and population standard deviation over every sample of every window.
pub fn fit_normalizer(dataset: &WindowedDataset) -> Result<NormStats> {
    let w = dataset.window_len();
    let mut sum = [0f64; CHANNELS];
    let mut sum_sq = [0f64; CHANNELS];
    for window in dataset.windows().data().chunks(CHANNELS * w) {
        for ch in 0..CHANNELS {
            for &v in &window[ch * w..(ch + 1) * w] {
                let v = v as f64;
                sum[ch] += v;
                sum_sq[ch] += v * v;
            }
        }
    }
    let n = (dataset.len() * w) as f64;
    let mut stats = NormStats {
        mean: [0.0; CHANNELS],
        std: [0.0; CHANNELS],
    };
    for ch in 0..CHANNELS {
        let mean = sum[ch] / n;
        let var = (sum_sq[ch] / n - mean * mean).max(0.0);
        let std = var.sqrt();
        if std.is_nan() || std <= 1e-6 * mean.abs().max(1.0) {
            return Err(Error::DegenerateChannel { channel: ch });
        }
        stats.mean[ch] = mean as f32;
        stats.std[ch] = std as f32;
    }
    Ok(stats)
}

fn transform(dataset: &WindowedDataset, f: impl Fn(usize, f32) -> f32) -> WindowedDataset {
    let w = dataset.window_len();
    let mut out = dataset.clone();
    for window in out.windows_mut().data_mut().chunks_mut(CHANNELS * w) {
        for ch in 0..CHANNELS {
            for v in &mut window[ch * w..(ch + 1) * w] {
                *v = f(ch, *v);
            }
        }
    }
    out
}

/// z-scores a raw dataset with `stats`.
pub fn apply_normalizer(dataset: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    if dataset.norm_stats().is_some() {
        return Err(Error::InvalidArgument("dataset is already normalised".into()));
    }
    Ok(transform(dataset, |ch, v| (v - stats.mean[ch]) / stats.std[ch]).with_norm(Some(*stats)))
}

/// z-scores a raw `[N, 3, W]` or `[3, W]` tensor in place.
pub fn normalize_windows(windows: &mut Tensor<f32>, stats: &NormStats) -> Result<()> {
    let shape = windows.shape();
    if !(shape.len() == 2 || shape.len() == 3) || shape[shape.len() - 2] != CHANNELS {
        return Err(Error::ShapeMismatch {
            op: "normalize",
            expected: vec![CHANNELS, *shape.last().unwrap_or(&0)],
            actual: shape.to_vec(),
        });
    }
    let w = shape[shape.len() - 1];
    for window in windows.data_mut().chunks_mut(CHANNELS * w) {
        for ch in 0..CHANNELS {
            for v in &mut window[ch * w..(ch + 1) * w] {
                *v = (*v - stats.mean[ch]) / stats.std[ch];
            }
        }
    }
    Ok(())
}

/// Undoes [`apply_normalizer`].
pub fn invert_normalizer(dataset: &WindowedDataset) -> Result<WindowedDataset> {
    let stats = *dataset
        .norm_stats()
        .ok_or_else(|| Error::InvalidArgument("dataset is not normalised".into()))?;
    Ok(transform(dataset, |ch, v| v * stats.std[ch] + stats.mean[ch]).with_norm(None))
}

/// Returns `dataset` normalised with `stats`: raw data is transformed, data already
/// normalised with exactly these statistics is passed through, anything else is an error.
pub fn normalized_with(dataset: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    match dataset.norm_stats() {
        None => apply_normalizer(dataset, stats),
        Some(s) if s == stats => Ok(dataset.clone()),
        Some(_) => Err(Error::InvalidArgument(
            "dataset was normalised with different statistics".into(),
        )),
    }
}
