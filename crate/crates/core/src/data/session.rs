//! Sensor samples, sessions and the session CSV format.
//!
//! ```text
//! timestamp_ms,hr_bpm,hrv_ms,eda_raw,label
//! 0,76.8123,55.0312,351.9044,0
//! 33,76.9011,54.9975,351.8802,0
//! ```
//!
//! `label` is `-1` (unlabeled), `0` (relaxed) or `1` (stressed).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "timestamp_ms,hr_bpm,hrv_ms,eda_raw,label";
pub const NOMINAL_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Unlabeled,
    Relaxed,
    Stressed,
}

impl Label {
    pub fn code(self) -> i8 {
        match self {
            Label::Unlabeled => -1,
            Label::Relaxed => 0,
            Label::Stressed => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Label::Unlabeled),
            0 => Some(Label::Relaxed),
            1 => Some(Label::Stressed),
            _ => None,
        }
    }

    /// Class index (0 relaxed, 1 stressed); `None` when unlabeled.
    pub fn class(self) -> Option<usize> {
        match self {
            Label::Unlabeled => None,
            Label::Relaxed => Some(0),
            Label::Stressed => Some(1),
        }
    }

    pub fn from_class(class: usize) -> Self {
        if class == 0 {
            Label::Relaxed
        } else {
            Label::Stressed
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Unlabeled => "unlabeled",
            Label::Relaxed => "relaxed",
            Label::Stressed => "stressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub timestamp_ms: i64,
    /// Beats per minute.
    pub hr: f64,
    /// Milliseconds, RMSSD-style variability.
    pub hrv: f64,
    /// Raw sensor units.
    pub eda: f64,
    pub label: Label,
}

impl SensorSample {
    pub fn channels(&self) -> [f64; 3] {
        [self.hr, self.hrv, self.eda]
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.hr.is_finite() && self.hr > 0.0) {
            return Err(format!("hr must be > 0, got {}", self.hr));
        }
        if !(self.hrv.is_finite() && self.hrv >= 0.0) {
            return Err(format!("hrv must be >= 0, got {}", self.hrv));
        }
        if !(self.eda.is_finite() && self.eda >= 0.0) {
            return Err(format!("eda must be >= 0, got {}", self.eda));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<SensorSample>,
}

impl Session {
    /// Validates sample ranges and strictly increasing timestamps.
    pub fn new(subject_id: impl Into<String>, sample_rate_hz: f64, samples: Vec<SensorSample>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptySession);
        }
        for (i, s) in samples.iter().enumerate() {
            s.validate()
                .map_err(|msg| Error::InvalidArgument(format!("sample {i}: {msg}")))?;
            if i > 0 && s.timestamp_ms <= samples[i - 1].timestamp_ms {
                return Err(Error::InvalidArgument(format!(
                    "sample {i}: timestamp {} not after {}",
                    s.timestamp_ms,
                    samples[i - 1].timestamp_ms
                )));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_gap_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 40);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format_sample_row(s));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io_util::write_atomic(path.as_ref(), self.to_csv_string().as_bytes())
    }
}

/// Rounds to the 4-decimal resolution of the CSV format, so that writing and re-reading a
/// quantised value is exact.
pub fn quantize(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub fn format_sample_row(s: &SensorSample) -> String {
    format!(
        "{},{:.4},{:.4},{:.4},{}",
        s.timestamp_ms,
        s.hr,
        s.hrv,
        s.eda,
        s.label.code()
    )
}

/// Loads a session CSV. The subject id is the file stem.
pub fn load_session_csv(path: impl AsRef<Path>) -> Result<Session> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_session(BufReader::new(file), path, subject)
}

pub fn parse_session(reader: impl BufRead, path: &Path, subject_id: String) -> Result<Session> {
    let err = |line: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(err(1, "missing header".into())),
    };
    let columns: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    for want in &expected {
        if !columns.contains(want) {
            return Err(err(1, format!("missing column `{want}`")));
        }
    }
    if columns != expected {
        return Err(err(1, format!("header must be `{CSV_HEADER}`")));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("cannot parse `{}` as {}", fields[i], expected[i])))
        };
        let timestamp_ms = fields[0]
            .parse::<i64>()
            .map_err(|_| err(line_no, format!("cannot parse `{}` as timestamp_ms", fields[0])))?;
        let code = fields[4]
            .parse::<i64>()
            .map_err(|_| err(line_no, format!("cannot parse `{}` as label", fields[4])))?;
        let label =
            Label::from_code(code).ok_or_else(|| err(line_no, format!("label must be -1, 0 or 1, got {code}")))?;
        let sample = SensorSample {
            timestamp_ms,
            hr: num(1)?,
            hrv: num(2)?,
            eda: num(3)?,
            label,
        };
        sample.validate().map_err(|m| err(line_no, m))?;
        if let Some(prev) = samples.last() {
            let prev: &SensorSample = prev;
            if timestamp_ms <= prev.timestamp_ms {
                return Err(err(
                    line_no,
                    format!("timestamp {timestamp_ms} is not after {}", prev.timestamp_ms),
                ));
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptySession);
    }
    Session::new(subject_id, NOMINAL_RATE_HZ, samples)
}

/// Appends rows in the session schema, writing the header first when the file is new.
pub struct SessionCsvAppender<W: Write> {
    out: W,
}

impl<W: Write> SessionCsvAppender<W> {
    pub fn new(mut out: W, write_header: bool) -> Result<Self> {
        if write_header {
            writeln!(out, "{CSV_HEADER}")?;
        }
        Ok(Self { out })
    }

    pub fn push(&mut self, sample: &SensorSample) -> Result<()> {
        writeln!(self.out, "{}", format_sample_row(sample))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
