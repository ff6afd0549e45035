use std::fmt;

use super::window::WindowedDataset;
use crate::error::{Error, Result};

/// A class below this share of the total triggers a warning.
pub const MINORITY_WARN_FRACTION: f64 = 0.40;

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// `[relaxed, stressed]`.
    pub counts: [usize; 2],
    pub ratios: [f64; 2],
    pub warning: Option<String>,
}

impl BalanceReport {
    pub fn from_counts(counts: [usize; 2]) -> Result<Self> {
        let total = counts[0] + counts[1];
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let ratios = counts.map(|c| c as f64 / total as f64);
        let minority = if ratios[0] <= ratios[1] { 0 } else { 1 };
        let warning = (ratios[minority] < MINORITY_WARN_FRACTION).then(|| {
            format!(
                "class imbalance: {} is {:.1}% of {} windows (below {:.0}%)",
                ["relaxed", "stressed"][minority],
                ratios[minority] * 100.0,
                total,
                MINORITY_WARN_FRACTION * 100.0
            )
        });
        Ok(Self {
            counts,
            ratios,
            warning,
        })
    }
}

pub fn class_balance_report(dataset: &WindowedDataset) -> Result<BalanceReport> {
    BalanceReport::from_counts(dataset.class_counts())
}

impl fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "relaxed {} ({:.1}%), stressed {} ({:.1}%)",
            self.counts[0],
            self.ratios[0] * 100.0,
            self.counts[1],
            self.ratios[1] * 100.0
        )?;
        if let Some(w) = &self.warning {
            write!(f, "\nwarning: {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_balanced_corpus() {
        let r = BalanceReport::from_counts([400_000, 420_000]).unwrap();
        assert!((r.ratios[1] - 0.512).abs() < 1e-3);
        assert!((r.ratios[0] - 0.488).abs() < 1e-3);
        assert!(r.warning.is_none());
    }

    #[test]
    fn single_class_warns_and_empty_errors() {
        let r = BalanceReport::from_counts([0, 12]).unwrap();
        assert!(r.warning.unwrap().contains("relaxed"));
        assert!(matches!(BalanceReport::from_counts([0, 0]), Err(Error::EmptyDataset)));
    }
}
