//! Window-level metrics and report rendering.
//!
//! Class 1 (stressed) is the positive class for precision, recall and F1. Text tables show
//! percentages to one decimal place. CSV layouts:
//!
//! ```text
//! report:  name,n,accuracy,f1,precision_relaxed,recall_relaxed,precision_stressed,recall_stressed,tn,fp,fn,tp
//! summary: same columns, one row per report
//! matrix:  data\model,<model labels...>     then one row per data set: <label>,<accuracies...>
//! ```
//!
//! Rates in CSV are written in shortest round-trip form, so parsing recovers them exactly.

use std::fmt::{self, Write as _};

use crate::data::{normalized_with, WindowedDataset};
use crate::error::{Error, Result};
use crate::model::StressNet;

/// `counts[actual][predicted]`, 0 relaxed, 1 stressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_predictions(actual: &[usize], predicted: &[usize]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels but {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            if a > 1 || p > 1 {
                return Err(Error::InvalidArgument(format!("class out of range: {a}/{p}")));
            }
            cm.counts[a][p] += 1;
        }
        Ok(cm)
    }

    pub fn from_counts(tn: usize, fp: usize, fn_: usize, tp: usize) -> Self {
        Self {
            counts: [[tn, fp], [fn_, tp]],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self) -> usize {
        self.counts[1][1]
    }

    pub fn tn(&self) -> usize {
        self.counts[0][0]
    }

    pub fn fp(&self) -> usize {
        self.counts[0][1]
    }

    pub fn fn_(&self) -> usize {
        self.counts[1][0]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Indexed by class.
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    /// F1 of the stressed class; 0 when precision + recall is 0.
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub n: usize,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let c = &confusion.counts;
        let precision = [ratio(c[0][0], c[0][0] + c[1][0]), ratio(c[1][1], c[1][1] + c[0][1])];
        let recall = [ratio(c[0][0], c[0][0] + c[0][1]), ratio(c[1][1], c[1][1] + c[1][0])];
        let (p, r) = (precision[1], recall[1]);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let n = confusion.total();
        Self {
            accuracy: ratio(c[0][0] + c[1][1], n),
            precision,
            recall,
            f1,
            confusion,
            n,
        }
    }
}

/// Evaluates `model` on `dataset`, which may be raw or already normalised with the model's
/// own statistics.
pub fn evaluate(model: &StressNet, dataset: &WindowedDataset) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let stats = model
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model carries no normalisation statistics".into()))?;
    let data = normalized_with(dataset, stats)?;
    let predicted = model.predict_classes(data.windows())?;
    Ok(EvalReport::from_confusion(ConfusionMatrix::from_predictions(
        data.labels(),
        &predicted,
    )?))
}

/// Text table plus CSV for one artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub csv: String,
}

pub const REPORT_CSV_HEADER: &str =
    "name,n,accuracy,f1,precision_relaxed,recall_relaxed,precision_stressed,recall_stressed,tn,fp,fn,tp";

fn csv_row(name: &str, r: &EvalReport) -> String {
    let c = &r.confusion;
    format!(
        "{name},{},{},{},{},{},{},{},{},{},{},{}",
        r.n,
        r.accuracy,
        r.f1,
        r.precision[0],
        r.recall[0],
        r.precision[1],
        r.recall[1],
        c.tn(),
        c.fp(),
        c.fn_(),
        c.tp()
    )
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// One report with its confusion matrix.
pub fn render_report(name: &str, report: &EvalReport) -> Rendered {
    let c = &report.confusion;
    let mut text = String::new();
    let _ = writeln!(text, "{name}: {} windows", report.n);
    let _ = writeln!(text, "  accuracy  {}", pct(report.accuracy));
    let _ = writeln!(text, "  f1-score  {:.2}", report.f1);
    let _ = writeln!(
        text,
        "  precision relaxed {}  stressed {}",
        pct(report.precision[0]),
        pct(report.precision[1])
    );
    let _ = writeln!(
        text,
        "  recall    relaxed {}  stressed {}",
        pct(report.recall[0]),
        pct(report.recall[1])
    );
    let _ = writeln!(text, "  confusion (rows actual, columns predicted)");
    let _ = writeln!(text, "              relaxed  stressed");
    let _ = writeln!(text, "    relaxed  {:>8}  {:>8}", c.tn(), c.fp());
    let _ = writeln!(text, "    stressed {:>8}  {:>8}", c.fn_(), c.tp());
    Rendered {
        text,
        csv: format!("{REPORT_CSV_HEADER}\n{}\n", csv_row(name, report)),
    }
}

/// Accuracy and F1 per named report, one row each.
pub fn render_summary(rows: &[(String, EvalReport)]) -> Rendered {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut text = format!("{:<width$}  {:>8}  {:>8}\n", "USER", "ACCURACY", "F1-SCORE");
    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    for (name, r) in rows {
        let _ = writeln!(text, "{name:<width$}  {:>8}  {:>8.2}", pct(r.accuracy), r.f1);
        let _ = writeln!(csv, "{}", csv_row(name, r));
    }
    Rendered { text, csv }
}

/// Parses a report or summary CSV back into `(name, report)` rows.
pub fn parse_report_csv(csv: &str) -> Result<Vec<(String, EvalReport)>> {
    let mut lines = csv.lines();
    if lines.next() != Some(REPORT_CSV_HEADER) {
        return Err(Error::InvalidArgument("not a report CSV".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(Error::InvalidArgument(format!("bad report row `{line}`")));
            }
            let count = |i: usize| {
                f[i].parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad count `{}`", f[i])))
            };
            let cm = ConfusionMatrix::from_counts(count(8)?, count(9)?, count(10)?, count(11)?);
            Ok((f[0].to_string(), EvalReport::from_confusion(cm)))
        })
        .collect()
}

/// Accuracy of each model (columns) on each user's held-out data (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub data_labels: Vec<String>,
    pub model_labels: Vec<String>,
    /// `values[data][model]`.
    pub values: Vec<Vec<f64>>,
}

impl CrossMatrix {
    /// True when every diagonal entry is strictly greater than the rest of its row.
    pub fn diagonal_dominates_rows(&self) -> bool {
        self.values.iter().enumerate().all(|(i, row)| {
            row.get(i)
                .is_some_and(|&d| row.iter().enumerate().all(|(j, &v)| j == i || d > v))
        })
    }

    pub fn render(&self) -> Rendered {
        let width = self
            .data_labels
            .iter()
            .chain(&self.model_labels)
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(8);
        let mut text = format!("{:<width$}", "data\\model");
        for m in &self.model_labels {
            let _ = write!(text, "  {m:>width$}");
        }
        text.push('\n');
        let mut csv = String::from("data\\model");
        for m in &self.model_labels {
            let _ = write!(csv, ",{m}");
        }
        csv.push('\n');
        for (label, row) in self.data_labels.iter().zip(&self.values) {
            let _ = write!(text, "{label:<width$}");
            csv.push_str(label);
            for v in row {
                let _ = write!(text, "  {:>width$}", pct(*v));
                let _ = write!(csv, ",{v}");
            }
            text.push('\n');
            csv.push('\n');
        }
        Rendered { text, csv }
    }

    pub fn parse_csv(csv: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("matrix CSV: {msg}"));
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("data\\model") {
            return Err(bad("missing header".into()));
        }
        let model_labels: Vec<String> = cols.map(str::to_string).collect();
        let mut data_labels = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let mut f = line.split(',');
            data_labels.push(f.next().unwrap_or_default().to_string());
            let row = f
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != model_labels.len() {
                return Err(bad(format!("row `{line}` has {} values", row.len())));
            }
            values.push(row);
        }
        Ok(Self {
            data_labels,
            model_labels,
            values,
        })
    }
}

/// Accuracy and F1 change from `before` to `after`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub before: EvalReport,
    pub after: EvalReport,
    /// Percentage points.
    pub accuracy_delta_pp: f64,
    pub f1_delta: f64,
}

pub fn compare_reports(before: &EvalReport, after: &EvalReport) -> Comparison {
    Comparison {
        before: *before,
        after: *after,
        accuracy_delta_pp: (after.accuracy - before.accuracy) * 100.0,
        f1_delta: after.f1 - before.f1,
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy {} -> {} ({:+.1} points), f1 {:.2} -> {:.2} ({:+.2})",
            pct(self.before.accuracy),
            pct(self.after.accuracy),
            self.accuracy_delta_pp,
            self.before.f1,
            self.after.f1,
            self.f1_delta
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with_accuracy(acc: f64) -> EvalReport {
        EvalReport {
            accuracy: acc,
            ..EvalReport::from_confusion(ConfusionMatrix::default())
        }
    }

    #[test]
    fn balanced_counts() {
        let r = EvalReport::from_confusion(ConfusionMatrix::from_counts(45, 5, 5, 45));
        assert!((r.precision[1] - 0.9).abs() < 1e-12);
        assert!((r.recall[1] - 0.9).abs() < 1e-12);
        assert!((r.f1 - 0.9).abs() < 1e-12);
        assert!((r.accuracy - 0.9).abs() < 1e-12);
        assert_eq!(r.n, 100);
    }

    #[test]
    fn perfect_and_degenerate() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        let r = EvalReport::from_confusion(cm);
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));
        let r = EvalReport::from_confusion(ConfusionMatrix::from_counts(10, 0, 0, 0));
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.accuracy, 1.0);
        assert!(ConfusionMatrix::from_predictions(&[0], &[]).is_err());
    }

    #[test]
    fn deltas() {
        let c = compare_reports(&report_with_accuracy(0.825), &report_with_accuracy(0.939));
        assert!((c.accuracy_delta_pp - 11.4).abs() < 1e-9);
        let c = compare_reports(&report_with_accuracy(0.55), &report_with_accuracy(0.939));
        assert!((c.accuracy_delta_pp - 38.9).abs() < 1e-9);
        let r = report_with_accuracy(0.7);
        let c = compare_reports(&r, &r);
        assert_eq!((c.accuracy_delta_pp, c.f1_delta), (0.0, 0.0));
        assert!(c.to_string().contains("+0.0 points"));
    }

    #[test]
    fn report_csv_roundtrip_and_text() {
        let r = EvalReport::from_confusion(ConfusionMatrix::from_counts(40, 3, 7, 29));
        let out = render_report("user00", &r);
        assert_eq!(out, render_report("user00", &r));
        assert!(out.text.contains("87.3%"), "{}", out.text);
        let back = parse_report_csv(&out.csv).unwrap();
        assert_eq!(back, vec![("user00".to_string(), r)]);
        let s = render_summary(&[("a".into(), r), ("b".into(), r)]);
        assert_eq!(parse_report_csv(&s.csv).unwrap().len(), 2);
    }

    #[test]
    fn matrix_render_and_parse() {
        let m = CrossMatrix {
            data_labels: vec!["user1".into()],
            model_labels: vec!["model1".into()],
            values: vec![vec![0.9387]],
        };
        let r = m.render();
        assert_eq!(r.text.lines().count(), 2);
        assert!(r.text.contains("93.9%"));
        assert_eq!(CrossMatrix::parse_csv(&r.csv).unwrap(), m);
        assert!(m.diagonal_dominates_rows());

        let m = CrossMatrix {
            data_labels: vec!["u1".into(), "u2".into()],
            model_labels: vec!["m1".into(), "m2".into()],
            values: vec![vec![0.939, 0.54], vec![0.6, 0.6]],
        };
        assert!(!m.diagonal_dominates_rows());
        assert_eq!(CrossMatrix::parse_csv(&m.render().csv).unwrap(), m);
    }

    proptest::proptest! {
        #[test]
        fn metrics_match_formulas(tn in 0usize..500, fp in 0usize..500, fn_ in 0usize..500, tp in 0usize..500, extra_tn in 0usize..500) {
            let cm = ConfusionMatrix::from_counts(tn, fp, fn_, tp);
            let r = EvalReport::from_confusion(cm);
            let n = tn + fp + fn_ + tp;
            proptest::prop_assert_eq!(r.n, n);
            if n > 0 {
                proptest::prop_assert_eq!(r.accuracy, (tp + tn) as f64 / n as f64);
            }
            // F1 depends only on TP, FP, FN
            let r2 = EvalReport::from_confusion(ConfusionMatrix::from_counts(tn + extra_tn, fp, fn_, tp));
            proptest::prop_assert_eq!(r.f1, r2.f1);
            if tp > 0 {
                let expected = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
                proptest::prop_assert!((r.f1 - expected).abs() < 1e-12);
            }
        }
    }
}
