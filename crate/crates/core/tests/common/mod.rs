//! Independent reference implementations and check drivers shared by the integration
//! tests and the acceptance suite.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stressnet::model::build_base_model;
use stressnet::nn::gradcheck::random_uniform;
use stressnet::nn::{
    grad_check, softmax, softmax_backward, CheckLoss, Conv1d, Dense, Dropout, GradCheckOptions, Layer, MaxPool1d,
    Network,
};
use stressnet::Tensor;

/// `out[b][o][t] = bias[o] + sum_c sum_j w[o][c][j] * x[b][c][t*stride + j]`, in f64.
pub fn conv_oracle(
    x: &[f64],
    shape: [usize; 3],
    w: &[f64],
    wshape: [usize; 3],
    bias: &[f64],
    stride: usize,
) -> Vec<f64> {
    let [batch, ic, len] = shape;
    let [oc, _, k] = wshape;
    let out_len = (len - k) / stride + 1;
    let mut out = Vec::with_capacity(batch * oc * out_len);
    for b in 0..batch {
        for o in 0..oc {
            for t in 0..out_len {
                let mut acc = bias[o];
                for c in 0..ic {
                    for j in 0..k {
                        acc += w[(o * ic + c) * k + j] * x[(b * ic + c) * len + t * stride + j];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// `out[b][o] = bias[o] + sum_i w[o][i] * x[b][i]`, in f64.
pub fn dense_oracle(x: &[f64], batch: usize, inputs: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let outputs = bias.len();
    let mut out = Vec::with_capacity(batch * outputs);
    for b in 0..batch {
        for o in 0..outputs {
            let mut acc = bias[o];
            for i in 0..inputs {
                acc += w[o * inputs + i] * x[b * inputs + i];
            }
            out.push(acc);
        }
    }
    out
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired values.
pub fn max_rel(actual: &[f64], expected: &[f64], floor: f64) -> f64 {
    assert_eq!(actual.len(), expected.len());
    actual
        .iter()
        .zip(expected)
        .map(|(a, e)| (a - e).abs() / a.abs().max(e.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn to_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct KernelErrors {
    pub cases: usize,
    /// f64 kernel against the f64 oracle.
    pub conv_f64: f64,
    pub dense_f64: f64,
    /// f32 kernel against the f64 oracle on the same (f32-representable) values.
    pub conv_f32: f64,
    pub dense_f32: f64,
}

/// Runs `cases` random conv1d and dense shapes through both kernels and the oracles.
pub fn kernel_oracle_errors(cases: usize, seed: u64) -> KernelErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = KernelErrors {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let (batch, ic, oc) = (rng.gen_range(1..=4), rng.gen_range(1..=8), rng.gen_range(1..=16));
        let (k, stride) = (rng.gen_range(1..=9), rng.gen_range(1..=3));
        let len = k + rng.gen_range(0..=60);
        let x: Tensor<f32> = random_uniform(&[batch, ic, len], &mut rng);
        let w: Tensor<f32> = random_uniform(&[oc, ic, k], &mut rng);
        let b: Tensor<f32> = random_uniform(&[oc], &mut rng);
        let expected = conv_oracle(
            &to_f64(&x),
            [batch, ic, len],
            &to_f64(&w),
            [oc, ic, k],
            &to_f64(&b),
            stride,
        );
        let conv32 = Conv1d::from_parts(w.clone(), b.clone(), stride).unwrap();
        let conv64 = Conv1d::from_parts(w.cast::<f64>(), b.cast::<f64>(), stride).unwrap();
        let out32 = to_f64(&conv32.forward(&x).unwrap());
        let out64 = conv64.forward(&x.cast::<f64>()).unwrap().into_data();
        e.conv_f32 = e.conv_f32.max(max_rel(&out32, &expected, 1.0));
        e.conv_f64 = e.conv_f64.max(max_rel(&out64, &expected, 1e-8));

        let (batch, inputs, outputs) = (rng.gen_range(1..=8), rng.gen_range(1..=96), rng.gen_range(1..=32));
        let x: Tensor<f32> = random_uniform(&[batch, inputs], &mut rng);
        let w: Tensor<f32> = random_uniform(&[outputs, inputs], &mut rng);
        let b: Tensor<f32> = random_uniform(&[outputs], &mut rng);
        let expected = dense_oracle(&to_f64(&x), batch, inputs, &to_f64(&w), &to_f64(&b));
        let d32 = Dense::from_parts(w.clone(), b.clone()).unwrap();
        let d64 = Dense::from_parts(w.cast::<f64>(), b.cast::<f64>()).unwrap();
        e.dense_f32 = e
            .dense_f32
            .max(max_rel(&to_f64(&d32.forward(&x).unwrap()), &expected, 1.0));
        e.dense_f64 = e.dense_f64.max(max_rel(
            &d64.forward(&x.cast::<f64>()).unwrap().into_data(),
            &expected,
            1e-8,
        ));
    }
    e
}

#[derive(Debug, Clone)]
pub struct GradSummary {
    pub name: &'static str,
    pub cases: usize,
    pub checked: usize,
    pub refined: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl GradSummary {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            checked: 0,
            refined: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst: String::new(),
        }
    }

    fn add(&mut self, net: &Network<f64>, x: &Tensor<f64>, loss: &CheckLoss<f64>, opts: &GradCheckOptions) {
        let r = grad_check(net, x, loss, opts).expect("grad check runs");
        self.cases += 1;
        self.checked += r.checked;
        self.refined += r.refined;
        self.skipped += r.skipped_nonsmooth;
        if r.max_rel_error >= self.max_rel_error {
            self.max_rel_error = r.max_rel_error;
            self.worst = format!("case {}: {}", self.cases, r.worst.unwrap_or_default());
        }
    }

    /// Enough cases, at most 1% of coordinates left unchecked at kinks, and every checked
    /// coordinate within `tol`.
    pub fn passes(&self, tol: f64, min_cases: usize) -> bool {
        self.cases >= min_cases
            && self.checked > 0
            && self.skipped * 100 <= self.checked + self.skipped
            && self.max_rel_error <= tol
    }
}

fn projection(net: &Network<f64>, x: &Tensor<f64>, rng: &mut ChaCha8Rng) -> CheckLoss<f64> {
    let shape = net.logits(x).unwrap().shape().to_vec();
    CheckLoss::Projection(random_uniform(&shape, rng))
}

/// Central-difference checks (eps 1e-3) of every layer type and of the full default network,
/// `cases` random cases each, inputs uniform in [-1, 1].
pub fn gradient_summaries(cases: usize, seed: u64) -> Vec<GradSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradCheckOptions::default();
    let mut out = Vec::new();

    let mut conv = GradSummary::new("conv1d");
    for _ in 0..cases {
        let (batch, ic, oc, k, stride) = (
            rng.gen_range(1..=3),
            rng.gen_range(1..=4),
            rng.gen_range(1..=5),
            rng.gen_range(1..=7),
            rng.gen_range(1..=3),
        );
        let len = k + rng.gen_range(0..=20);
        let mut layer = Conv1d::<f64>::new(ic, oc, k, stride).unwrap();
        layer.init_he(&mut rng);
        layer.bias = random_uniform(&[oc], &mut rng);
        let net = Network::new(vec![Layer::Conv1d(layer)]);
        let x = random_uniform(&[batch, ic, len], &mut rng);
        let loss = projection(&net, &x, &mut rng);
        conv.add(&net, &x, &loss, &opts);
    }
    out.push(conv);

    let mut dense = GradSummary::new("dense");
    for _ in 0..cases {
        let (batch, inputs, outputs) = (rng.gen_range(1..=4), rng.gen_range(1..=24), rng.gen_range(1..=12));
        let mut layer = Dense::<f64>::new(inputs, outputs).unwrap();
        layer.init_he(&mut rng);
        layer.bias = random_uniform(&[outputs], &mut rng);
        let net = Network::new(vec![Layer::Dense(layer)]);
        let x = random_uniform(&[batch, inputs], &mut rng);
        let loss = projection(&net, &x, &mut rng);
        dense.add(&net, &x, &loss, &opts);
    }
    out.push(dense);

    // parameterless layers: checked through their input gradient
    let mut pool = GradSummary::new("maxpool1d");
    let mut relu = GradSummary::new("relu");
    let mut flatten = GradSummary::new("flatten");
    let mut dropout = GradSummary::new("dropout (inference)");
    for _ in 0..cases {
        let (batch, ch, size) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let stride = rng.gen_range(1..=size);
        let len = size + rng.gen_range(0..=16);
        let x = random_uniform(&[batch, ch, len], &mut rng);

        let net = Network::new(vec![Layer::MaxPool1d(MaxPool1d::new(size, stride).unwrap())]);
        let loss = projection(&net, &x, &mut rng);
        pool.add(&net, &x, &loss, &opts);

        let net = Network::new(vec![Layer::Relu]);
        let loss = projection(&net, &x, &mut rng);
        relu.add(&net, &x, &loss, &opts);

        let net = Network::new(vec![Layer::Flatten]);
        let loss = projection(&net, &x, &mut rng);
        flatten.add(&net, &x, &loss, &opts);

        let net = Network::new(vec![Layer::Dropout(Dropout::new(rng.gen_range(0.0..0.9)).unwrap())]);
        let loss = projection(&net, &x, &mut rng);
        dropout.add(&net, &x, &loss, &opts);
    }
    out.extend([pool, relu, flatten, dropout]);

    let mut sm = GradSummary::new("softmax");
    for _ in 0..cases {
        let (batch, classes) = (rng.gen_range(1..=4), rng.gen_range(2..=6));
        let x: Tensor<f64> = random_uniform(&[batch, classes], &mut rng);
        let r: Tensor<f64> = random_uniform(&[batch, classes], &mut rng);
        sm.cases += 1;
        let analytic = softmax_backward(&softmax(&x), &r).unwrap();
        let objective = |x: &Tensor<f64>| -> f64 { softmax(x).data().iter().zip(r.data()).map(|(p, w)| p * w).sum() };
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += opts.eps;
            let mut minus = x.clone();
            minus.data_mut()[i] -= opts.eps;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * opts.eps);
            let rel = stressnet::nn::gradcheck::relative_error(analytic.data()[i], numeric);
            sm.checked += 1;
            if rel >= sm.max_rel_error {
                sm.max_rel_error = rel;
                sm.worst = format!("case {}: input[{i}]", sm.cases);
            }
        }
    }
    out.push(sm);

    let mut full = GradSummary::new("full default network");
    let sample_opts = GradCheckOptions {
        max_per_tensor: Some(24),
        ..opts.clone()
    };
    for case in 0..cases {
        let net = build_base_model(400, 1000 + case as u64).unwrap().network.cast::<f64>();
        let x = random_uniform(&[2, 3, 400], &mut rng);
        let labels = vec![rng.gen_range(0..2), rng.gen_range(0..2)];
        let opts = GradCheckOptions {
            seed: case as u64,
            ..sample_opts.clone()
        };
        full.add(&net, &x, &CheckLoss::CrossEntropy(labels), &opts);
    }
    out.push(full);
    out
}

pub mod live {
    use std::time::{Duration, Instant};

    use stressnet::cli::{run_live, LiveKey, LiveOptions, LiveSummary, ScriptedKeys};
    use stressnet::data::{
        fit_normalizer, load_session_csv, segment_windows, synth_generate, window_count, Label, Phase, PopulationSpec,
        Session, SessionCsvAppender, WindowedDataset,
    };
    use stressnet::model::build_base_model;

    pub struct ReplayCheck {
        pub elapsed: Duration,
        pub summary: LiveSummary,
        pub rows_match: bool,
        pub values_match: bool,
        pub timeline_match: bool,
        pub inference_count_ok: bool,
        pub windows: Option<WindowedDataset>,
        pub expected_secs: f64,
    }

    /// Replays a two-minute session at `speed` with scripted label switches and checks the
    /// recording written to `path`.
    pub fn scripted_replay(path: &std::path::Path, speed: f64) -> ReplayCheck {
        let profile = &PopulationSpec::target().sample(1, "live", 77)[0];
        let schedule = vec![(Phase::Relaxed, 60.0), (Phase::Stressed, 60.0)];
        let source: Session = synth_generate(profile, &schedule).unwrap();
        let window = 400;
        let stride = 100;
        let mut model = build_base_model(window, 3).unwrap();
        model.norm_stats = Some(fit_normalizer(&segment_windows(&source, window, stride).unwrap()).unwrap());

        let script = vec![
            (10_000, LiveKey::Label(Label::Relaxed)),
            (55_000, LiveKey::Label(Label::Stressed)),
            (100_000, LiveKey::Label(Label::Unlabeled)),
            (105_000, LiveKey::Label(Label::Stressed)),
        ];
        let label_at = |t: i64| {
            script
                .iter()
                .rev()
                .find(|(at, _)| *at <= t)
                .map(|(_, k)| match k {
                    LiveKey::Label(l) => *l,
                    LiveKey::Quit => unreachable!(),
                })
                .unwrap_or(Label::Unlabeled)
        };
        let mut keys = ScriptedKeys::new(script.clone());
        let file = std::fs::File::create(path).unwrap();
        let mut sink = SessionCsvAppender::new(std::io::BufWriter::new(file), true).unwrap();
        let mut display = Vec::new();
        let options = LiveOptions {
            speed,
            stride,
            raw_terminal: false,
        };
        let started = Instant::now();
        let summary = run_live(&model, &source, &mut keys, &mut sink, &mut display, &options).unwrap();
        let elapsed = started.elapsed();
        drop(sink);

        let recorded = load_session_csv(path).unwrap();
        let t0 = source.samples[0].timestamp_ms;
        let rows_match = recorded.len() == source.len() && summary.emitted == source.len();
        let values_match = recorded
            .samples
            .iter()
            .zip(&source.samples)
            .all(|(r, s)| r.channels() == s.channels() && r.timestamp_ms == s.timestamp_ms);
        let timeline_match = recorded
            .samples
            .iter()
            .all(|r| r.label == label_at(r.timestamp_ms - t0));
        let inference_count_ok = summary.inferences.len() == window_count(source.len(), window, stride);
        ReplayCheck {
            elapsed,
            summary,
            rows_match,
            values_match,
            timeline_match,
            inference_count_ok,
            windows: segment_windows(&recorded, window, stride).ok(),
            expected_secs: source.duration_s() / speed,
        }
    }
}
