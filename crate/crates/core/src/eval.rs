//! Scoring: micro and per-class precision/recall/F1 with null as "no
//! relation", McNemar's paired test, and run aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelationSchema;

/// χ² critical value, 1 degree of freedom, α = 0.05.
pub const CHI2_CRITICAL_05: f64 = 3.841;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("no results to aggregate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    /// `None` when the class was never predicted.
    pub precision: Option<f64>,
    /// `None` when the class has no gold support.
    pub recall: Option<f64>,
    /// `None` when the class has no gold support.
    pub f1: Option<f64>,
    pub support: usize,
    pub predicted: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub per_class: BTreeMap<String, ClassScores>,
    /// Rows are gold labels, columns predictions, both in label-index order (null last).
    pub confusion: Vec<Vec<usize>>,
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Pooled counts over relation types: a prediction is a true positive only
/// when it is non-null and equals a non-null gold label.
pub fn micro_counts(preds: &[usize], gold: &[usize], null_index: usize) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in preds.iter().zip(gold) {
        if p != null_index && p == g {
            tp += 1;
        } else {
            if p != null_index {
                fp += 1;
            }
            if g != null_index {
                fn_ += 1;
            }
        }
    }
    (tp, fp, fn_)
}

pub fn micro_f1_indices(preds: &[usize], gold: &[usize], null_index: usize) -> f64 {
    let (tp, fp, fn_) = micro_counts(preds, gold, null_index);
    f1_score(ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Scores label-index sequences (null last).
pub fn evaluate_indices(preds: &[usize], gold: &[usize], schema: &RelationSchema) -> Result<EvalResult, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch(preds.len(), gold.len()));
    }
    let n = schema.num_labels();
    let null = schema.null_index();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &g) in preds.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let (tp, fp, fn_) = micro_counts(preds, gold, null);
    let micro_precision = ratio(tp, tp + fp);
    let micro_recall = ratio(tp, tp + fn_);
    let per_class = (0..null)
        .map(|k| {
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let tp_k = confusion[k][k];
            let precision = (predicted > 0).then(|| ratio(tp_k, predicted));
            let recall = (support > 0).then(|| ratio(tp_k, support));
            let f1 = recall.map(|r| f1_score(precision.unwrap_or(0.0), r));
            let scores = ClassScores { precision, recall, f1, support, predicted, true_positives: tp_k };
            (schema.label_name(k).to_owned(), scores)
        })
        .collect();
    Ok(EvalResult {
        micro_precision,
        micro_recall,
        micro_f1: f1_score(micro_precision, micro_recall),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        per_class,
        confusion,
    })
}

fn indices<S: AsRef<str>>(labels: &[S], schema: &RelationSchema) -> Result<Vec<usize>, EvalError> {
    labels
        .iter()
        .map(|l| schema.label_index(l.as_ref()).ok_or_else(|| EvalError::UnknownLabel(l.as_ref().to_owned())))
        .collect()
}

pub fn evaluate<S: AsRef<str>>(predictions: &[S], gold: &[S], schema: &RelationSchema) -> Result<EvalResult, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), gold.len()));
    }
    evaluate_indices(&indices(predictions, schema)?, &indices(gold, schema)?, schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// First system right, second wrong.
    pub b: usize,
    /// First system wrong, second right.
    pub c: usize,
    pub statistic: f64,
    pub significant_at_05: bool,
}

/// Continuity-corrected statistic `(|b − c| − 1)² / (b + c)`; 0 when `b + c = 0`.
pub fn mcnemar_statistic(b: usize, c: usize) -> f64 {
    if b + c == 0 {
        return 0.0;
    }
    let d = (b as f64 - c as f64).abs() - 1.0;
    d * d / (b + c) as f64
}

pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemarResult {
    let statistic = mcnemar_statistic(b, c);
    McNemarResult { b, c, statistic, significant_at_05: statistic > CHI2_CRITICAL_05 }
}

/// McNemar's test on per-item correctness of two prediction lists.
pub fn mcnemar<S: AsRef<str>>(preds_a: &[S], preds_b: &[S], gold: &[S]) -> Result<McNemarResult, EvalError> {
    if preds_a.len() != gold.len() {
        return Err(EvalError::LengthMismatch(preds_a.len(), gold.len()));
    }
    if preds_b.len() != gold.len() {
        return Err(EvalError::LengthMismatch(preds_b.len(), gold.len()));
    }
    let (mut b, mut c) = (0, 0);
    for ((pa, pb), g) in preds_a.iter().zip(preds_b).zip(gold) {
        let ra = pa.as_ref() == g.as_ref();
        let rb = pb.as_ref() == g.as_ref();
        match (ra, rb) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub micro_precision: MeanStd,
    pub micro_recall: MeanStd,
    pub micro_f1: MeanStd,
    /// Per-class F1 over the runs where the class had support.
    pub per_class_f1: BTreeMap<String, MeanStd>,
}

pub fn aggregate_runs(results: &[EvalResult]) -> Result<RunSummary, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let col = |f: fn(&EvalResult) -> f64| MeanStd::of(&results.iter().map(f).collect::<Vec<_>>()).expect("non-empty");
    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        for (label, s) in &r.per_class {
            if let Some(f1) = s.f1 {
                per_class.entry(label.clone()).or_default().push(f1);
            }
        }
    }
    Ok(RunSummary {
        micro_precision: col(|r| r.micro_precision),
        micro_recall: col(|r| r.micro_recall),
        micro_f1: col(|r| r.micro_f1),
        per_class_f1: per_class.into_iter().filter_map(|(k, v)| MeanStd::of(&v).map(|m| (k, m))).collect(),
    })
}
