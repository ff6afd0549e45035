//! The concrete stress classifier: architecture, training, prediction and model files.

mod container;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{NormStats, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Dense, Dropout, Layer, MaxPool1d, Network};
use crate::tensor::Tensor;

pub(crate) use container::save_model_with;
pub use container::{
    decode_model, encode_model, load_model, model_checksum, read_model_file, save_model, ModelFile, CONTAINER_VERSION,
    MAGIC,
};
pub use train::{cross_validate, cross_validate_with, train, EpochStats, TrainConfig, TrainReport};

pub const CLASS_COUNT: usize = 2;
pub const HEAD_WIDTH: usize = 160;
pub const DROPOUT_RATE: f64 = 0.3;

/// A layer stack over `[3, window_len]` inputs ending in a 2-way softmax, plus the
/// normalisation its inputs are expected to carry.
#[derive(Debug, Clone, PartialEq)]
pub struct StressNet {
    pub network: Network<f32>,
    pub window_len: usize,
    pub norm_stats: Option<NormStats>,
}

impl StressNet {
    /// Checks that the stack maps `[3, window_len]` to `CLASS_COUNT` probabilities.
    pub fn new(network: Network<f32>, window_len: usize, norm_stats: Option<NormStats>) -> Result<Self> {
        let out = network.output_shape(&[CHANNELS, window_len])?;
        if out != [CLASS_COUNT] || !matches!(network.layers().last(), Some(Layer::Softmax)) {
            return Err(Error::InvalidArgument(format!(
                "network must end in a {CLASS_COUNT}-way softmax, got output {out:?}"
            )));
        }
        Ok(Self {
            network,
            window_len,
            norm_stats,
        })
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Index of the Flatten layer.
    pub fn flatten_index(&self) -> Option<usize> {
        self.network.layers().iter().position(|l| matches!(l, Layer::Flatten))
    }

    /// Width of the flattened feature vector fed to the head.
    pub fn flatten_dim(&self) -> Result<usize> {
        let idx = self
            .flatten_index()
            .ok_or_else(|| Error::InvalidArgument("network has no flatten layer".into()))?;
        let shape = self.network.layers()[..=idx]
            .iter()
            .try_fold(vec![CHANNELS, self.window_len], |s, l| l.output_shape(&s))?;
        Ok(shape[0])
    }

    /// Softmax outputs for a `[B, 3, W]` batch, evaluated in chunks.
    pub fn predict_proba(&self, windows: &Tensor<f32>) -> Result<Vec<[f32; CLASS_COUNT]>> {
        let expected = [CHANNELS, self.window_len];
        if windows.rank() != 3 || windows.shape()[1..] != expected {
            return Err(Error::ShapeMismatch {
                op: "predict",
                expected: vec![windows.shape().first().copied().unwrap_or(1), CHANNELS, self.window_len],
                actual: windows.shape().to_vec(),
            });
        }
        const CHUNK: usize = 256;
        let n = windows.shape()[0];
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(CHUNK) {
            let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let probs = self.network.forward(&windows.gather_outer(&idx)?)?;
            out.extend(probs.data().chunks(CLASS_COUNT).map(|p| [p[0], p[1]]));
        }
        Ok(out)
    }

    /// Predicted classes for a `[B, 3, W]` batch.
    pub fn predict_classes(&self, windows: &Tensor<f32>) -> Result<Vec<usize>> {
        Ok(self.predict_proba(windows)?.iter().map(|p| argmax(p)).collect())
    }
}

/// First index wins on ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class and probabilities for one normalised `[3, W]` window.
pub fn predict(model: &StressNet, window: &Tensor<f32>) -> Result<(usize, [f32; CLASS_COUNT])> {
    if window.rank() != 2 || window.shape()[0] != CHANNELS {
        return Err(Error::ShapeMismatch {
            op: "predict",
            expected: vec![CHANNELS, model.window_len],
            actual: window.shape().to_vec(),
        });
    }
    let batch = window.clone().reshape(&[1, CHANNELS, window.shape()[1]])?;
    let probs = model.predict_proba(&batch)?[0];
    Ok((argmax(&probs), probs))
}

fn base_layers(window_len: usize) -> Result<Vec<Layer<f32>>> {
    let mut layers = vec![
        Layer::Conv1d(Conv1d::new(CHANNELS, 16, 7, 1)?),
        Layer::Relu,
        Layer::MaxPool1d(MaxPool1d::new(4, 4)?),
        Layer::Conv1d(Conv1d::new(16, 32, 5, 1)?),
        Layer::Relu,
        Layer::MaxPool1d(MaxPool1d::new(4, 4)?),
        Layer::Conv1d(Conv1d::new(32, 64, 3, 1)?),
        Layer::Relu,
        Layer::MaxPool1d(MaxPool1d::new(2, 2)?),
        Layer::Flatten,
    ];
    let flat = Network::new(layers.clone()).output_shape(&[CHANNELS, window_len])?[0];
    layers.push(Layer::Dropout(Dropout::new(DROPOUT_RATE)?));
    layers.extend(head_layers(flat, HEAD_WIDTH)?);
    Ok(layers)
}

/// `Dense(features -> hidden) -> ReLU -> Dense(hidden -> 2) -> Softmax`, zero-initialised.
pub(crate) fn head_layers(features: usize, hidden: usize) -> Result<Vec<Layer<f32>>> {
    Ok(vec![
        Layer::Dense(Dense::new(features, hidden)?),
        Layer::Relu,
        Layer::Dense(Dense::new(hidden, CLASS_COUNT)?),
        Layer::Softmax,
    ])
}

/// He-uniform initialisation of every parameterised layer from `from` onwards.
pub(crate) fn init_layers(layers: &mut [Layer<f32>], from: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut layers[from..] {
        match layer {
            Layer::Conv1d(c) => c.init_he(&mut rng),
            Layer::Dense(d) => d.init_he(&mut rng),
            _ => {}
        }
    }
}

/// Smallest window the default stack accepts.
pub fn min_window_len() -> usize {
    (1..10_000)
        .find(|&w| base_layers(w).is_ok())
        .expect("default stack accepts some window length")
}

/// The default classifier:
///
/// ```text
/// Conv1d(3->16, k7) ReLU MaxPool(4)
/// Conv1d(16->32, k5) ReLU MaxPool(4)
/// Conv1d(32->64, k3) ReLU MaxPool(2)
/// Flatten Dropout(0.3) Dense(->160) ReLU Dense(160->2) Softmax
/// ```
///
/// For 400-sample windows the flattened width is 640 and the model has about 112k
/// parameters.
pub fn build_base_model(window_len: usize, seed: u64) -> Result<StressNet> {
    let mut layers = base_layers(window_len).map_err(|_| Error::WindowTooShort {
        min: min_window_len(),
        got: window_len,
    })?;
    init_layers(&mut layers, 0, seed);
    StressNet::new(Network::new(layers), window_len, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_shapes() {
        let m = build_base_model(400, 1).unwrap();
        assert_eq!(m.flatten_dim().unwrap(), 640);
        let dropout: Vec<f64> = m
            .network
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dropout(d) => Some(d.rate()),
                _ => None,
            })
            .collect();
        assert_eq!(dropout, vec![0.3]);
        let dense: Vec<(usize, usize)> = m
            .network
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some((d.in_units(), d.out_units())),
                _ => None,
            })
            .collect();
        assert_eq!(dense, vec![(640, 160), (160, 2)]);
        // conv 3*16*7+16, 16*32*5+32, 32*64*3+64; dense 640*160+160, 160*2+2
        assert_eq!(m.param_count(), 352 + 2592 + 6208 + 102_560 + 322);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        assert_eq!(build_base_model(400, 7).unwrap(), build_base_model(400, 7).unwrap());
        assert_ne!(build_base_model(400, 7).unwrap(), build_base_model(400, 8).unwrap());
    }

    #[test]
    fn short_window_reports_minimum() {
        let min = min_window_len();
        assert!(build_base_model(min, 0).is_ok());
        match build_base_model(min - 1, 0) {
            Err(Error::WindowTooShort { min: m, got }) => assert_eq!((m, got), (min, min - 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn argmax_ties_take_first() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = build_base_model(96, 3).unwrap();
        let x = Tensor::from_fn(&[3, 96], |i| ((i * 37 % 11) as f32 - 5.0) * 0.3);
        let (class, p) = predict(&m, &x).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        assert_eq!(class, argmax(&p));
        assert!(predict(&m, &Tensor::zeros(&[2, 96])).is_err());
    }
}
