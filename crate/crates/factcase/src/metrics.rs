//! Metric suite: accuracy, macro-F1, and per-class precision/recall from
//! binary confusion counts.
//!
//! Precision and recall headline numbers are reported for a configured
//! positive class (default: the fake class, `Verdict::False`); both
//! per-class values are always present in the report. Degenerate 0/0
//! ratios are defined as 0.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deploy::TraceRecord;
use crate::model::Verdict;

/// Confusion counts relative to the headline (positive) class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation report over one set of (predicted, gold) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    /// Precision of the headline class.
    pub precision: f64,
    /// Recall of the headline class.
    pub recall: f64,
    pub headline_class: Verdict,
    pub class_true: ClassMetrics,
    pub class_false: ClassMetrics,
    pub confusion: ConfusionCounts,
    pub n_scored: u64,
    pub n_failed: u64,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scored {} samples ({} failed excluded)",
            self.n_scored, self.n_failed
        )?;
        writeln!(
            f,
            "  ACC {:.4}  F1-macro {:.4}  PR {:.4}  RC {:.4}  (PR/RC over class {})",
            self.accuracy, self.f1_macro, self.precision, self.recall, self.headline_class
        )?;
        writeln!(
            f,
            "  class true : PR {:.4}  RC {:.4}  F1 {:.4}",
            self.class_true.precision, self.class_true.recall, self.class_true.f1
        )?;
        writeln!(
            f,
            "  class false: PR {:.4}  RC {:.4}  F1 {:.4}",
            self.class_false.precision, self.class_false.recall, self.class_false.f1
        )?;
        write!(
            f,
            "  confusion (pos={}): TP {}  FP {}  FN {}  TN {}",
            self.headline_class,
            self.confusion.true_pos,
            self.confusion.false_pos,
            self.confusion.false_neg,
            self.confusion.true_neg
        )
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Compute the report over (predicted, gold) pairs with the default
/// headline class (fake).
pub fn compute_metrics(pairs: &[(Verdict, Verdict)]) -> Result<MetricsReport, MetricsError> {
    compute_metrics_with_headline(pairs, Verdict::False)
}

/// Compute the report with an explicit headline class.
pub fn compute_metrics_with_headline(
    pairs: &[(Verdict, Verdict)],
    headline: Verdict,
) -> Result<MetricsReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut confusion = ConfusionCounts::default();
    for &(predicted, gold) in pairs {
        match (predicted == headline, gold == headline) {
            (true, true) => confusion.true_pos += 1,
            (true, false) => confusion.false_pos += 1,
            (false, true) => confusion.false_neg += 1,
            (false, false) => confusion.true_neg += 1,
        }
    }
    let n = confusion.total();
    let pos = ClassMetrics {
        precision: ratio(confusion.true_pos, confusion.true_pos + confusion.false_pos),
        recall: ratio(confusion.true_pos, confusion.true_pos + confusion.false_neg),
        f1: 0.0,
    };
    let neg = ClassMetrics {
        precision: ratio(confusion.true_neg, confusion.true_neg + confusion.false_neg),
        recall: ratio(confusion.true_neg, confusion.true_neg + confusion.false_pos),
        f1: 0.0,
    };
    let pos = ClassMetrics {
        f1: f1(pos.precision, pos.recall),
        ..pos
    };
    let neg = ClassMetrics {
        f1: f1(neg.precision, neg.recall),
        ..neg
    };
    let (class_true, class_false) = match headline {
        Verdict::False => (neg, pos),
        Verdict::True => (pos, neg),
    };
    Ok(MetricsReport {
        accuracy: ratio(confusion.true_pos + confusion.true_neg, n),
        f1_macro: (pos.f1 + neg.f1) / 2.0,
        precision: pos.precision,
        recall: pos.recall,
        headline_class: headline,
        class_true,
        class_false,
        confusion,
        n_scored: n,
        n_failed: 0,
    })
}

/// Join detection traces against gold labels. Failed traces are excluded
/// from every metric and counted in `n_failed`; a scored trace whose id is
/// missing from the golds is an error.
pub fn evaluate(
    traces: &[TraceRecord],
    golds: &BTreeMap<String, Verdict>,
) -> Result<MetricsReport, MetricsError> {
    let mut pairs = Vec::new();
    let mut n_failed = 0u64;
    for record in traces {
        match record {
            TraceRecord::Ok(trace) => {
                let gold = golds
                    .get(&trace.case.id)
                    .ok_or_else(|| MetricsError::IdMismatch(trace.case.id.clone()))?;
                pairs.push((trace.final_verdict, *gold));
            }
            TraceRecord::Failed { .. } => n_failed += 1,
        }
    }
    let mut report = compute_metrics(&pairs)?;
    report.n_failed = n_failed;
    Ok(report)
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot compute metrics over zero scored samples")]
    EmptyInput,
    #[error("trace id {0} has no gold label")]
    IdMismatch(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use Verdict::{False as F, True as T};

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let pairs = vec![(T, T), (T, T), (F, F), (F, F)];
        let report = compute_metrics(&pairs).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.f1_macro, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.n_scored, 4);
    }

    #[test]
    fn all_one_class_predictor_on_balanced_data() {
        // 100 samples, 50/50 gold split, predictor always says False.
        let mut pairs = Vec::new();
        for _ in 0..50 {
            pairs.push((F, F));
            pairs.push((F, T));
        }
        let report = compute_metrics(&pairs).unwrap();
        assert!((report.accuracy - 0.5).abs() < 1e-12);
        // Predicted class (False, the headline): PR 0.5, RC 1.0.
        assert!((report.precision - 0.5).abs() < 1e-12);
        assert!((report.recall - 1.0).abs() < 1e-12);
        // The other class gets F1 = 0, so macro-F1 = (2/3 + 0) / 2 = 1/3.
        assert_eq!(report.class_true.f1, 0.0);
        assert!((report.f1_macro - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn worked_confusion_example() {
        // TP=3, FP=1, FN=2, TN=4 relative to the fake (False) class.
        let mut pairs = Vec::new();
        for _ in 0..3 {
            pairs.push((F, F));
        }
        pairs.push((F, T));
        for _ in 0..2 {
            pairs.push((T, F));
        }
        for _ in 0..4 {
            pairs.push((T, T));
        }
        let report = compute_metrics(&pairs).unwrap();
        assert_eq!(
            report.confusion,
            ConfusionCounts {
                true_pos: 3,
                false_pos: 1,
                false_neg: 2,
                true_neg: 4
            }
        );
        assert!((report.accuracy - 0.7).abs() < 1e-12);
        assert!((report.precision - 0.75).abs() < 1e-12);
        assert!((report.recall - 0.6).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_is_symmetric_under_class_swap() {
        let pairs = vec![(T, T), (T, F), (F, F), (F, F), (T, T), (F, T)];
        let swapped: Vec<(Verdict, Verdict)> = pairs
            .iter()
            .map(|(p, g)| (p.reverse(), g.reverse()))
            .collect();
        let a = compute_metrics(&pairs).unwrap();
        let b = compute_metrics(&swapped).unwrap();
        assert!((a.f1_macro - b.f1_macro).abs() < 1e-12);
        assert!((a.accuracy - b.accuracy).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            compute_metrics(&[]),
            Err(MetricsError::EmptyInput)
        ));
    }

    #[test]
    fn headline_class_is_configurable() {
        let pairs = vec![(T, T), (T, F), (F, F)];
        let fake_headline = compute_metrics_with_headline(&pairs, F).unwrap();
        let true_headline = compute_metrics_with_headline(&pairs, T).unwrap();
        assert_eq!(fake_headline.class_true, true_headline.class_true);
        assert_eq!(fake_headline.class_false, true_headline.class_false);
        assert_ne!(fake_headline.precision, true_headline.precision);
        assert!((fake_headline.f1_macro - true_headline.f1_macro).abs() < 1e-12);
    }
}
