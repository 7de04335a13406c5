//! Relation classifiers: the probabilistic classifier contract, class
//! weighting, the thresholded decision rule and threshold tuning, with a
//! built-in linear model over hashed n-gram features.

mod features;
mod linear;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{RelationInstance, RelationSchema};
use crate::eval;

pub use features::{featurize, featurize_tokens, SparseVector, DEFAULT_FEATURE_DIM};
pub use linear::{encode, train_classifier, LinearTextClassifier, TrainConfig, PROB_FLOOR};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("class {0:?} has no training instances")]
    MissingClass(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("threshold {0} is outside (0, 1)")]
    Threshold(f64),
    #[error("empty development set")]
    EmptyDev,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("classifier format: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Anything producing a distribution over the schema's labels (null last).
pub trait ProbabilisticClassifier: Send + Sync {
    fn num_labels(&self) -> usize;
    fn predict_proba(&self, instance: &RelationInstance) -> Vec<f64>;
}

/// Trains classifiers for the ensemble builders.
pub trait ClassifierBackend: Sync {
    type Model: ProbabilisticClassifier;

    fn train(
        &self,
        train: &[RelationInstance],
        schema: &RelationSchema,
        weights: &ClassWeights,
        seed: u64,
    ) -> Result<Self::Model, ClassifierError>;
}

/// The built-in backend; `seed` replaces `config.seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearBackend {
    pub config: TrainConfig,
}

impl ClassifierBackend for LinearBackend {
    type Model = LinearTextClassifier;

    fn train(
        &self,
        train: &[RelationInstance],
        schema: &RelationSchema,
        weights: &ClassWeights,
        seed: u64,
    ) -> Result<LinearTextClassifier, ClassifierError> {
        train_classifier(train, schema, weights, &TrainConfig { seed, ..self.config.clone() })
    }
}

/// Per-class loss weights, keyed by label (null included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: BTreeMap<String, f64>,
}

impl ClassWeights {
    pub fn uniform(schema: &RelationSchema) -> Self {
        let weights = (0..schema.num_labels()).map(|k| (schema.label_name(k).to_owned(), 1.0)).collect();
        Self { weights }
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.weights.get(label).copied()
    }

    /// Weights in label-index order.
    pub fn as_slice(&self, schema: &RelationSchema) -> Result<Vec<f64>, ClassifierError> {
        (0..schema.num_labels())
            .map(|k| {
                let name = schema.label_name(k);
                self.get(name).ok_or_else(|| ClassifierError::UnknownLabel(name.to_owned()))
            })
            .collect()
    }
}

/// `weight_c = freq_min / freq_c` over every label, null included, so the
/// rarest label gets exactly 1.
pub fn compute_class_weights(train: &[RelationInstance], schema: &RelationSchema) -> Result<ClassWeights, ClassifierError> {
    let mut counts = vec![0usize; schema.num_labels()];
    for inst in train {
        let k = schema.label_index(&inst.label).ok_or_else(|| ClassifierError::UnknownLabel(inst.label.clone()))?;
        counts[k] += 1;
    }
    class_weights_from_counts(schema, &counts)
}

/// Same as [`compute_class_weights`] from label-index-ordered counts.
pub fn class_weights_from_counts(schema: &RelationSchema, counts: &[usize]) -> Result<ClassWeights, ClassifierError> {
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(ClassifierError::MissingClass(schema.label_name(k).to_owned()));
    }
    let min = *counts.iter().min().ok_or(ClassifierError::EmptyTrain)? as f64;
    let weights = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (schema.label_name(k).to_owned(), min / c as f64))
        .collect();
    Ok(ClassWeights { weights })
}

/// Threshold decision: the most probable relation type if its probability
/// reaches `t`, otherwise null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRule {
    threshold: f64,
}

impl PredictionRule {
    pub fn new(threshold: f64) -> Result<Self, ClassifierError> {
        if threshold > 0.0 && threshold < 1.0 {
            Ok(Self { threshold })
        } else {
            Err(ClassifierError::Threshold(threshold))
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Label index for `probs` (null last). Ties among relation types go to
    /// the lowest index.
    pub fn decide(&self, probs: &[f64]) -> usize {
        let null = probs.len() - 1;
        let mut best = 0;
        for k in 1..null {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        if null > 0 && probs[best] >= self.threshold {
            best
        } else {
            null
        }
    }
}

pub fn predict<C: ProbabilisticClassifier + ?Sized>(
    classifier: &C,
    instance: &RelationInstance,
    rule: &PredictionRule,
    schema: &RelationSchema,
) -> String {
    schema.label_name(rule.decide(&classifier.predict_proba(instance))).to_owned()
}

/// `0.05, 0.10, …, 0.95`.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdChoice {
    pub rule: PredictionRule,
    pub dev_micro_f1: f64,
}

/// Picks the grid threshold with the best micro-F1 on `dev`; ties go to the
/// smallest threshold.
pub fn tune_threshold<C: ProbabilisticClassifier + ?Sized>(
    classifier: &C,
    dev: &[RelationInstance],
    schema: &RelationSchema,
    grid: &[f64],
) -> Result<ThresholdChoice, ClassifierError> {
    if dev.is_empty() {
        return Err(ClassifierError::EmptyDev);
    }
    let probs: Vec<Vec<f64>> = dev.iter().map(|i| classifier.predict_proba(i)).collect();
    let gold = dev
        .iter()
        .map(|i| schema.label_index(&i.label).ok_or_else(|| ClassifierError::UnknownLabel(i.label.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    tune_threshold_from_probs(&probs, &gold, schema.null_index(), grid)
}

/// Threshold search over precomputed probabilities and gold label indices.
pub fn tune_threshold_from_probs(
    probs: &[Vec<f64>],
    gold: &[usize],
    null_index: usize,
    grid: &[f64],
) -> Result<ThresholdChoice, ClassifierError> {
    if probs.is_empty() {
        return Err(ClassifierError::EmptyDev);
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let mut best: Option<ThresholdChoice> = None;
    for t in sorted {
        let rule = PredictionRule::new(t)?;
        let preds: Vec<usize> = probs.iter().map(|p| rule.decide(p)).collect();
        let f1 = eval::micro_f1_indices(&preds, gold, null_index);
        if best.is_none_or(|b| f1 > b.dev_micro_f1) {
            best = Some(ThresholdChoice { rule, dev_micro_f1: f1 });
        }
    }
    best.ok_or_else(|| ClassifierError::Config("empty threshold grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ddi() -> RelationSchema {
        RelationSchema::with_types(["advise", "effect", "int", "mechanism"]).unwrap()
    }

    #[test]
    fn weights_direct_ratios() {
        let s = RelationSchema::with_types(["a"]).unwrap();
        let w = class_weights_from_counts(&s, &[10, 10]).unwrap();
        assert_eq!(w.get("a"), Some(1.0));
        assert_eq!(w.get("null"), Some(1.0));
        let w = class_weights_from_counts(&s, &[1, 1000]).unwrap();
        assert_eq!(w.get("a"), Some(1.0));
        assert_eq!(w.get("null"), Some(0.001));
        assert!(matches!(class_weights_from_counts(&s, &[0, 3]), Err(ClassifierError::MissingClass(_))));
    }

    #[test]
    fn weights_scale_invariant() {
        let s = ddi();
        let base = class_weights_from_counts(&s, &[153, 658, 1083, 1353, 500]).unwrap();
        let scaled = class_weights_from_counts(&s, &[153 * 7, 658 * 7, 1083 * 7, 1353 * 7, 500 * 7]).unwrap();
        for (k, v) in &base.weights {
            assert!((v - scaled.weights[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn rule_examples() {
        let r = PredictionRule::new(0.5).unwrap();
        // probabilities over [rel1, rel2, null]
        assert_eq!(r.decide(&[0.30, 0.40, 0.30]), 2);
        assert_eq!(r.decide(&[0.30, 0.60, 0.10]), 1);
        assert_eq!(PredictionRule::new(0.35).unwrap().decide(&[0.40, 0.40, 0.20]), 0);
        assert!(PredictionRule::new(0.0).is_err());
        assert!(PredictionRule::new(1.0).is_err());
    }

    struct Stub(Vec<f64>);

    impl ProbabilisticClassifier for Stub {
        fn num_labels(&self) -> usize {
            self.0.len()
        }
        fn predict_proba(&self, instance: &RelationInstance) -> Vec<f64> {
            // Positives carry the highest mass on their label; nulls get 0.4 max.
            if instance.label == "null" { vec![0.4, 0.6] } else { self.0.clone() }
        }
    }

    fn dev() -> Vec<RelationInstance> {
        let mut d = Vec::new();
        for k in 0..5 {
            d.push(RelationInstance::from_text(format!("p{k}"), "ENTITY_A ENTITY_B", "r"));
            d.push(RelationInstance::from_text(format!("n{k}"), "ENTITY_A ENTITY_B", "null"));
        }
        d
    }

    #[test]
    fn tuning_picks_smallest_separating_threshold() {
        let s = RelationSchema::with_types(["r"]).unwrap();
        let choice = tune_threshold(&Stub(vec![0.6, 0.4]), &dev(), &s, &default_threshold_grid()).unwrap();
        assert_eq!(choice.rule.threshold(), 0.45);
        assert_eq!(choice.dev_micro_f1, 1.0);
        let forced = tune_threshold(&Stub(vec![0.6, 0.4]), &dev(), &s, &[0.5]).unwrap();
        assert_eq!(forced.rule.threshold(), 0.5);
        assert!(matches!(tune_threshold(&Stub(vec![0.6, 0.4]), &[], &s, &[0.5]), Err(ClassifierError::EmptyDev)));
    }

    struct Confident;

    impl ProbabilisticClassifier for Confident {
        fn num_labels(&self) -> usize {
            2
        }
        fn predict_proba(&self, instance: &RelationInstance) -> Vec<f64> {
            if instance.label == "null" { vec![0.0, 1.0] } else { vec![1.0, 0.0] }
        }
    }

    #[test]
    fn tuning_tie_goes_to_smallest() {
        let s = RelationSchema::with_types(["r"]).unwrap();
        let choice = tune_threshold(&Confident, &dev(), &s, &default_threshold_grid()).unwrap();
        assert_eq!(choice.rule.threshold(), 0.05);
        assert_eq!(choice.dev_micro_f1, 1.0);
    }

    #[test]
    fn grid_values() {
        let g = default_threshold_grid();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[8], 0.45);
        assert_eq!(g[18], 0.95);
    }
}
