use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;

/// Confusion counts with positive = unsafe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn record(&mut self, truth_unsafe: bool, predicted_unsafe: bool) {
        match (truth_unsafe, predicted_unsafe) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Same table with the classes swapped.
    pub fn swapped(&self) -> Counts {
        Counts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fpr: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
}

impl Metrics {
    pub fn from_counts(c: &Counts) -> Self {
        let recall = ratio(c.tp, c.tp + c.fn_);
        let precision = ratio(c.tp, c.tp + c.fp);
        let fpr = ratio(c.fp, c.fp + c.tn);
        let tnr = ratio(c.tn, c.fp + c.tn);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            fpr,
            recall,
            precision,
            f1,
            balanced_accuracy: 0.5 * (recall + tnr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub label: String,
    pub counts: Counts,
    /// Positive class = unsafe.
    pub metrics: Metrics,
    /// The same counts read with positive class = safe.
    pub safe_positive: Metrics,
    pub n_constraints: usize,
    pub grid: GridSpec,
    /// Nodes skipped inside the don't-care band.
    pub excluded: u64,
    pub seconds: f64,
}

impl ClassificationReport {
    pub fn from_counts(label: &str, counts: Counts, n_constraints: usize, grid: GridSpec, excluded: u64) -> Self {
        Self {
            label: label.to_string(),
            counts,
            metrics: Metrics::from_counts(&counts),
            safe_positive: Metrics::from_counts(&counts.swapped()),
            n_constraints,
            grid,
            excluded,
            seconds: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictor() {
        let c = Counts { tp: 10, fp: 0, tn: 90, fn_: 0 };
        let m = Metrics::from_counts(&c);
        assert_eq!((m.fpr, m.recall, m.f1, m.balanced_accuracy), (0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn all_unsafe_predictor_has_base_rate_precision() {
        let c = Counts { tp: 12, fp: 88, tn: 0, fn_: 0 };
        let m = Metrics::from_counts(&c);
        assert_eq!(m.recall, 1.0);
        assert!((m.precision - 0.12).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn identities_hold(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fn_ in 0u64..1000) {
            let c = Counts { tp, fp, tn, fn_ };
            let m = Metrics::from_counts(&c);
            if m.precision + m.recall > 0.0 {
                prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
            }
            if tp + fn_ > 0 && tn + fp > 0 {
                let tpr = tp as f64 / (tp + fn_) as f64;
                let tnr = tn as f64 / (tn + fp) as f64;
                prop_assert!((m.balanced_accuracy - (tpr + tnr) / 2.0).abs() < 1e-12);
                // Balanced accuracy does not depend on which class is called positive.
                let s = Metrics::from_counts(&c.swapped());
                prop_assert!((s.balanced_accuracy - m.balanced_accuracy).abs() < 1e-12);
            }
        }
    }
}
