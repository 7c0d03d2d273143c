//! Confusion-matrix metrics for binary classifiers over +1/-1 labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts and derived metrics for one evaluation.
///
/// Conventions for empty denominators: precision is 0 when nothing was
/// predicted positive, recall is 0 when no true positives exist, and F1 is 0
/// whenever precision + recall is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    /// Builds a report from raw counts.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> EvalReport {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport { tp, fp, fn_, tn, precision, recall, f1 }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Compares predictions against ground truth. Both slices must be the same
/// non-zero length and contain only +1/-1.
pub fn confusion(predictions: &[i8], truths: &[i8]) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("confusion needs at least one prediction".into()));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (&p, &t) in predictions.iter().zip(truths) {
        if p.abs() != 1 || t.abs() != 1 {
            return Err(Error::ConfigInvalid(format!(
                "labels must be +1 or -1, got prediction {p} / truth {t}"
            )));
        }
        match (p > 0, t > 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}

/// Escapes one CSV field: quotes are added when the value contains commas,
/// quotes, or newlines, and embedded quotes are doubled.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
