use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{featurize, SparseVector, DEFAULT_FEATURE_DIM};
use super::{ClassWeights, ClassifierError, PredictionRule, ProbabilisticClassifier};
use crate::corpus::{RelationInstance, RelationSchema};
use crate::seed;

const FORMAT: &str = "dare-classifier/1";
/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub feature_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { feature_dim: DEFAULT_FEATURE_DIM, epochs: 5, learning_rate: 0.1, seed: 0 }
    }
}

/// Multinomial logistic regression over hashed n-gram counts, one output per
/// relation type plus null (null last).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTextClassifier {
    labels: Vec<String>,
    feature_dim: usize,
    /// Feature-major: `weights[f * n_labels + k]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    epoch_losses: Vec<f64>,
}

impl LinearTextClassifier {
    /// A zero-initialised model for the schema's label set.
    pub fn zeros(schema: &RelationSchema, feature_dim: usize) -> Self {
        let labels: Vec<String> = (0..schema.num_labels()).map(|k| schema.label_name(k).to_owned()).collect();
        let n = labels.len();
        Self { labels, feature_dim, weights: vec![0.0; feature_dim * n], bias: vec![0.0; n], epoch_losses: Vec::new() }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Weighted training loss after each epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn weight(&self, feature: usize, label: usize) -> f64 {
        self.weights[feature * self.labels.len() + label]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Flat parameter view: weights (feature-major) followed by biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let w = self.weights.len();
        assert_eq!(params.len(), w + self.bias.len(), "parameter length");
        self.weights.copy_from_slice(&params[..w]);
        self.bias.copy_from_slice(&params[w..]);
    }

    pub fn proba_features(&self, x: &SparseVector) -> Vec<f64> {
        let n = self.labels.len();
        let mut logits = self.bias.clone();
        for (f, v) in x.iter() {
            let row = &self.weights[f * n..(f + 1) * n];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += w * v;
            }
        }
        softmax(&mut logits);
        logits
    }

    /// Mean weighted negative log-likelihood over `data`.
    pub fn loss(&self, data: &[(SparseVector, usize)], class_weights: &[f64]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data
            .iter()
            .map(|(x, y)| class_weights[*y] * -self.proba_features(x)[*y].max(PROB_FLOOR).ln())
            .sum();
        total / data.len() as f64
    }

    /// Loss and its gradient with respect to [`Self::parameters`].
    pub fn loss_and_gradient(&self, data: &[(SparseVector, usize)], class_weights: &[f64]) -> (f64, Vec<f64>) {
        let n = self.labels.len();
        let mut grad = vec![0.0; self.weights.len() + n];
        let mut total = 0.0;
        let scale = 1.0 / data.len().max(1) as f64;
        for (x, y) in data {
            let p = self.proba_features(x);
            let w = class_weights[*y];
            total += w * -p[*y].max(PROB_FLOOR).ln();
            for k in 0..n {
                let g = w * (p[k] - if k == *y { 1.0 } else { 0.0 }) * scale;
                for (f, v) in x.iter() {
                    grad[f * n + k] += g * v;
                }
                grad[self.weights.len() + k] += g;
            }
        }
        (total * scale, grad)
    }

    fn sgd_step(&mut self, x: &SparseVector, y: usize, weight: f64, lr: f64) {
        let n = self.labels.len();
        let p = self.proba_features(x);
        let g: Vec<f64> = (0..n).map(|k| weight * (p[k] - if k == y { 1.0 } else { 0.0 })).collect();
        for (f, v) in x.iter() {
            let row = &mut self.weights[f * n..(f + 1) * n];
            for (w, gk) in row.iter_mut().zip(&g) {
                *w -= lr * gk * v;
            }
        }
        for (b, gk) in self.bias.iter_mut().zip(&g) {
            *b -= lr * gk;
        }
    }

    pub fn save(&self, path: &Path, rule: Option<&PredictionRule>) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json(rule)).map_err(|e| ClassifierError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<PredictionRule>), ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassifierError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Serialises the model; only non-zero weights are written.
    pub fn to_json(&self, rule: Option<&PredictionRule>) -> String {
        let n = self.labels.len();
        let weights = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| ((i / n) as u32, (i % n) as u32, *w))
            .collect();
        let p = PersistedClassifier {
            format: FORMAT.into(),
            feature_dim: self.feature_dim,
            labels: self.labels.clone(),
            bias: self.bias.clone(),
            weights,
            threshold: rule.map(|r| r.threshold()),
            epoch_losses: self.epoch_losses.clone(),
        };
        serde_json::to_string(&p).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<PredictionRule>), ClassifierError> {
        let p: PersistedClassifier = serde_json::from_str(text)?;
        if p.format != FORMAT {
            return Err(ClassifierError::Format(format!("unsupported classifier format {:?}", p.format)));
        }
        let n = p.labels.len();
        if p.bias.len() != n || n < 2 {
            return Err(ClassifierError::Format("bias length does not match label count".into()));
        }
        let mut weights = vec![0.0; p.feature_dim * n];
        for (f, k, w) in p.weights {
            let (f, k) = (f as usize, k as usize);
            if f >= p.feature_dim || k >= n {
                return Err(ClassifierError::Format(format!("weight index ({f}, {k}) out of range")));
            }
            weights[f * n + k] = w;
        }
        let rule = p.threshold.map(PredictionRule::new).transpose()?;
        let model = Self { labels: p.labels, feature_dim: p.feature_dim, weights, bias: p.bias, epoch_losses: p.epoch_losses };
        Ok((model, rule))
    }
}

impl ProbabilisticClassifier for LinearTextClassifier {
    fn num_labels(&self) -> usize {
        self.labels.len()
    }

    fn predict_proba(&self, instance: &RelationInstance) -> Vec<f64> {
        self.proba_features(&featurize(instance, self.feature_dim))
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedClassifier {
    format: String,
    feature_dim: usize,
    labels: Vec<String>,
    bias: Vec<f64>,
    /// (feature, label, value) for every non-zero weight.
    weights: Vec<(u32, u32, f64)>,
    threshold: Option<f64>,
    #[serde(default)]
    epoch_losses: Vec<f64>,
}

pub(crate) fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        z += *l;
    }
    for l in logits.iter_mut() {
        *l /= z;
    }
}

/// Encodes instances as (features, label index) pairs.
pub fn encode(
    instances: &[RelationInstance],
    schema: &RelationSchema,
    feature_dim: usize,
) -> Result<Vec<(SparseVector, usize)>, ClassifierError> {
    instances
        .iter()
        .map(|i| {
            let y = schema.label_index(&i.label).ok_or_else(|| ClassifierError::UnknownLabel(i.label.clone()))?;
            Ok((featurize(i, feature_dim), y))
        })
        .collect()
}

/// Trains with per-example SGD for a fixed number of epochs, shuffling the
/// example order each epoch from `config.seed`.
pub fn train_classifier(
    train: &[RelationInstance],
    schema: &RelationSchema,
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<LinearTextClassifier, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }
    if config.feature_dim == 0 || config.learning_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(ClassifierError::Config("feature_dim and learning_rate must be positive".into()));
    }
    let data = encode(train, schema, config.feature_dim)?;
    let mut present = vec![false; schema.num_labels()];
    for (_, y) in &data {
        present[*y] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(ClassifierError::MissingClass(schema.label_name(missing).to_owned()));
    }
    let class_weights = weights.as_slice(schema)?;
    let mut model = LinearTextClassifier::zeros(schema, config.feature_dim);
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &data[i];
            model.sgd_step(x, *y, class_weights[*y], config.learning_rate);
        }
        let loss = model.loss(&data, &class_weights);
        log::debug!("epoch {}: weighted loss {loss:.6}", epoch + 1);
        model.epoch_losses.push(loss);
    }
    Ok(model)
}
