//! Live labelling: replay a recorded stream at a chosen speed while keypresses set the
//! current label, run the model every stride and append the labelled samples to a CSV.

use std::collections::VecDeque;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::data::{normalize_windows, Label, SensorSample, Session, SessionCsvAppender, CHANNELS};
use crate::error::{Error, Result};
use crate::model::{predict, StressNet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiveKey {
    Label(Label),
    Quit,
}

impl LiveKey {
    /// `s` stressed, `r` relaxed, `u` unlabeled, `q` quit.
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            's' => Some(LiveKey::Label(Label::Stressed)),
            'r' => Some(LiveKey::Label(Label::Relaxed)),
            'u' => Some(LiveKey::Label(Label::Unlabeled)),
            'q' => Some(LiveKey::Quit),
            _ => None,
        }
    }
}

/// Where keypresses come from.
pub trait KeySource {
    /// Returns the next key if one arrives within `wait`. `stream_ms` is the replay
    /// position (source time since the first sample) of the sample about to be emitted.
    fn next_key(&mut self, stream_ms: i64, wait: Duration) -> Result<Option<LiveKey>>;
}

/// Keys pinned to stream positions, for tests and demos. A key at `t` applies to the first
/// sample at or after `t`.
#[derive(Debug, Clone)]
pub struct ScriptedKeys {
    keys: VecDeque<(i64, LiveKey)>,
}

impl ScriptedKeys {
    pub fn new(mut keys: Vec<(i64, LiveKey)>) -> Self {
        keys.sort_by_key(|(t, _)| *t);
        Self { keys: keys.into() }
    }
}

impl KeySource for ScriptedKeys {
    fn next_key(&mut self, stream_ms: i64, wait: Duration) -> Result<Option<LiveKey>> {
        if self.keys.front().is_some_and(|(t, _)| *t <= stream_ms) {
            return Ok(self.keys.pop_front().map(|(_, k)| k));
        }
        std::thread::sleep(wait);
        Ok(None)
    }
}

/// Keys read from the terminal in raw mode; raw mode ends when this is dropped.
pub struct TerminalKeys {
    _private: (),
}

impl TerminalKeys {
    pub fn new() -> Result<Self> {
        use std::io::IsTerminal;
        if !std::io::stdin().is_terminal() || !std::io::stdout().is_terminal() {
            return Err(Error::NotInteractive);
        }
        crossterm::terminal::enable_raw_mode()?;
        Ok(Self { _private: () })
    }
}

impl Drop for TerminalKeys {
    fn drop(&mut self) {
        let _ = crossterm::terminal::disable_raw_mode();
    }
}

impl KeySource for TerminalKeys {
    fn next_key(&mut self, _stream_ms: i64, wait: Duration) -> Result<Option<LiveKey>> {
        use crossterm::event::{self, Event, KeyCode, KeyEventKind, KeyModifiers};
        let deadline = Instant::now() + wait;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if !event::poll(left)? {
                return Ok(None);
            }
            if let Event::Key(k) = event::read()? {
                if k.kind != KeyEventKind::Press {
                    continue;
                }
                if k.code == KeyCode::Char('c') && k.modifiers.contains(KeyModifiers::CONTROL) {
                    return Ok(Some(LiveKey::Quit));
                }
                if let KeyCode::Char(c) = k.code {
                    if let Some(key) = LiveKey::from_char(c) {
                        return Ok(Some(key));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveOptions {
    /// Replay speed relative to real time.
    pub speed: f64,
    /// Samples between inferences.
    pub stride: usize,
    /// Use `\r\n` line endings (the terminal is in raw mode).
    pub raw_terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveInference {
    /// Index of the last sample in the window.
    pub sample: usize,
    pub timestamp_ms: i64,
    pub class: usize,
    pub probs: [f32; 2],
    pub label: Label,
}

/// State of a running live session.
#[derive(Debug, Clone)]
pub struct LiveSessionState {
    pub label: Label,
    buffer: VecDeque<[f64; CHANNELS]>,
    window: usize,
    stride: usize,
    since_inference: usize,
    pub emitted: usize,
}

impl LiveSessionState {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument("window and stride must be >= 1".into()));
        }
        Ok(Self {
            label: Label::Unlabeled,
            buffer: VecDeque::with_capacity(window),
            window,
            stride,
            since_inference: 0,
            emitted: 0,
        })
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Records one sample under the current label. Returns the raw `[3, W]` window when an
    /// inference is due: once the buffer first fills, then every `stride` samples.
    pub fn push(&mut self, sample: &SensorSample) -> (SensorSample, Option<Tensor<f32>>) {
        let labelled = SensorSample {
            label: self.label,
            ..*sample
        };
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample.channels());
        self.emitted += 1;
        self.since_inference += 1;
        if self.buffer.len() < self.window {
            return (labelled, None);
        }
        if self.emitted > self.window && self.since_inference < self.stride {
            return (labelled, None);
        }
        self.since_inference = 0;
        let w = self.window;
        let mut data = vec![0f32; CHANNELS * w];
        for (t, values) in self.buffer.iter().enumerate() {
            for ch in 0..CHANNELS {
                data[ch * w + t] = values[ch] as f32;
            }
        }
        (
            labelled,
            Some(Tensor::new(vec![CHANNELS, w], data).expect("window shape")),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSummary {
    pub emitted: usize,
    /// Emitted samples per label: unlabeled, relaxed, stressed.
    pub label_counts: [usize; 3],
    pub inferences: Vec<LiveInference>,
    pub quit_early: bool,
}

fn label_slot(label: Label) -> usize {
    match label {
        Label::Unlabeled => 0,
        Label::Relaxed => 1,
        Label::Stressed => 2,
    }
}

/// Replays `source` at `speed`, applying keys before each sample is emitted, appending
/// every emitted sample to `sink` and printing an inference to `display` every stride.
pub fn run_live<W: Write>(
    model: &StressNet,
    source: &Session,
    keys: &mut dyn KeySource,
    sink: &mut SessionCsvAppender<W>,
    display: &mut dyn Write,
    options: &LiveOptions,
) -> Result<LiveSummary> {
    if !(options.speed > 0.0 && options.speed.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "speed must be > 0, got {}",
            options.speed
        )));
    }
    let stats = model
        .norm_stats
        .ok_or_else(|| Error::InvalidArgument("model carries no normalisation statistics".into()))?;
    let eol = if options.raw_terminal { "\r\n" } else { "\n" };
    let mut state = LiveSessionState::new(model.window_len, options.stride)?;
    let mut summary = LiveSummary {
        emitted: 0,
        label_counts: [0; 3],
        inferences: Vec::new(),
        quit_early: false,
    };
    let t0 = source.samples.first().map(|s| s.timestamp_ms).unwrap_or(0);
    let started = Instant::now();
    write!(
        display,
        "replaying {} at {}x; keys: s stressed, r relaxed, u unlabeled, q quit{eol}",
        source.subject_id, options.speed
    )?;

    'samples: for (i, sample) in source.samples.iter().enumerate() {
        let stream_ms = sample.timestamp_ms - t0;
        let due = started + Duration::from_secs_f64(stream_ms.max(0) as f64 / 1000.0 / options.speed);
        loop {
            let wait = due.saturating_duration_since(Instant::now());
            match keys.next_key(stream_ms, wait)? {
                Some(LiveKey::Quit) => {
                    summary.quit_early = true;
                    break 'samples;
                }
                Some(LiveKey::Label(label)) => {
                    if label != state.label {
                        write!(
                            display,
                            "[{:>7.1}s] label -> {}{eol}",
                            stream_ms as f64 / 1000.0,
                            label.name()
                        )?;
                    }
                    state.label = label;
                }
                None => break,
            }
        }
        let (labelled, window) = state.push(sample);
        sink.push(&labelled)?;
        summary.label_counts[label_slot(labelled.label)] += 1;
        if let Some(mut window) = window {
            normalize_windows(&mut window, &stats)?;
            let (class, probs) = predict(model, &window)?;
            let inference = LiveInference {
                sample: i,
                timestamp_ms: sample.timestamp_ms,
                class,
                probs,
                label: state.label,
            };
            write!(
                display,
                "[{:>7.1}s] {:<8} p={:.2}  (label: {}){eol}",
                stream_ms as f64 / 1000.0,
                Label::from_class(class).name(),
                probs[class],
                state.label.name()
            )?;
            summary.inferences.push(inference);
        }
    }
    sink.flush()?;
    summary.emitted = state.emitted;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize) -> SensorSample {
        SensorSample {
            timestamp_ms: (i as i64 * 1000) / 30,
            hr: 70.0 + i as f64,
            hrv: 50.0,
            eda: 300.0,
            label: Label::Stressed,
        }
    }

    #[test]
    fn keys_map_to_labels() {
        assert_eq!(LiveKey::from_char('s'), Some(LiveKey::Label(Label::Stressed)));
        assert_eq!(LiveKey::from_char('R'), Some(LiveKey::Label(Label::Relaxed)));
        assert_eq!(LiveKey::from_char('u'), Some(LiveKey::Label(Label::Unlabeled)));
        assert_eq!(LiveKey::from_char('q'), Some(LiveKey::Quit));
        assert_eq!(LiveKey::from_char('x'), None);
    }

    #[test]
    fn state_starts_unlabeled_and_overrides_source_label() {
        let mut st = LiveSessionState::new(4, 2).unwrap();
        let (out, _) = st.push(&sample(0));
        assert_eq!(out.label, Label::Unlabeled);
        st.label = Label::Relaxed;
        assert_eq!(st.push(&sample(1)).0.label, Label::Relaxed);
    }

    #[test]
    fn inference_cadence_and_bounded_buffer() {
        let mut st = LiveSessionState::new(4, 2).unwrap();
        let due: Vec<usize> = (0..11)
            .filter(|&i| {
                let (_, w) = st.push(&sample(i));
                assert!(st.buffered() <= 4);
                w.is_some()
            })
            .collect();
        // first full window ends at sample 3, then every 2 samples
        assert_eq!(due, vec![3, 5, 7, 9]);
    }

    #[test]
    fn window_holds_latest_samples_in_order() {
        let mut st = LiveSessionState::new(3, 1).unwrap();
        let mut last = None;
        for i in 0..5 {
            last = st.push(&sample(i)).1;
        }
        let w = last.unwrap();
        assert_eq!(w.shape(), &[3, 3]);
        assert_eq!(&w.data()[..3], &[72.0, 73.0, 74.0]);
    }

    #[test]
    fn scripted_keys_release_in_time_order() {
        let mut keys = ScriptedKeys::new(vec![(500, LiveKey::Quit), (100, LiveKey::Label(Label::Relaxed))]);
        assert_eq!(keys.next_key(50, Duration::ZERO).unwrap(), None);
        assert_eq!(
            keys.next_key(100, Duration::ZERO).unwrap(),
            Some(LiveKey::Label(Label::Relaxed))
        );
        assert_eq!(keys.next_key(400, Duration::ZERO).unwrap(), None);
        assert_eq!(keys.next_key(600, Duration::ZERO).unwrap(), Some(LiveKey::Quit));
    }
}
