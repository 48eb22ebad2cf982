//! Accuracy, per-class precision/recall/F1, macro-F1 and the confusion matrix.

use serde::{Deserialize, Serialize};

use crate::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Index 0 = human, 1 = bot.
    pub per_class: [ClassMetrics; 2],
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_digest: Option<String>,
}

pub fn metrics(y_true: &[usize], y_pred: &[usize]) -> Result<EvalReport, LearnError> {
    if y_true.len() != y_pred.len() {
        return Err(LearnError::Shape(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(LearnError::Shape("no samples to evaluate".into()));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (t, p) in y_true.iter().zip(y_pred) {
        if *t > 1 || *p > 1 {
            return Err(LearnError::Shape(format!("labels must be 0 or 1, got ({t}, {p})")));
        }
        confusion[*t][*p] += 1;
    }
    let per = |c: usize| {
        let tp = confusion[c][c] as f64;
        let predicted = (confusion[0][c] + confusion[1][c]) as f64;
        let support = confusion[c][0] + confusion[c][1];
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    };
    let per_class = [per(0), per(1)];
    Ok(EvalReport {
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / y_true.len() as f64,
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
        confusion,
        seed: None,
        config_digest: None,
    })
}

/// Sample mean and (n − 1) standard deviation; std is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_constant_predictions() {
        let r = metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        let r = metrics(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion, [[2, 0], [2, 0]]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(metrics(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
