//! Single-label multiclass scoring.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

/// Classes with no gold and no predicted documents score F1 = 0 and still
/// count toward the macro average.
pub fn evaluate(preds: &[u32], gold: &[u32], num_labels: usize) -> Result<EvalReport> {
    if preds.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: gold.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::InvalidConfig("nothing to evaluate".into()));
    }
    let mut confusion = vec![vec![0u64; num_labels]; num_labels];
    for (&p, &g) in preds.iter().zip(gold) {
        if p as usize >= num_labels || g as usize >= num_labels {
            return Err(Error::InvalidConfig(format!(
                "label index out of range for {num_labels} labels"
            )));
        }
        confusion[g as usize][p as usize] += 1;
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..num_labels)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let correct: u64 = (0..num_labels).map(|c| confusion[c][c]).sum();
    let micro_f1 = correct as f64 / preds.len() as f64;
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / num_labels as f64;
    Ok(EvalReport {
        micro_f1,
        macro_f1,
        per_class,
        confusion,
    })
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
