//! Generator backends: the token-level model contract, the built-in n-gram
//! model with per-class adaptation, temperature/top-k sampling and the
//! mask/length generation filter.

mod adapted;
mod joint;
mod ngram;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{RelationInstance, RelationSchema};
use crate::seed;

pub use adapted::{adapt, AdaptedLM, DEFAULT_LAMBDA};
pub use joint::{joint_conditional_fit, JointConditionalLM};
pub use ngram::{NGramLM, DEFAULT_ALPHA, DEFAULT_ORDER};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("attempt budget exhausted for {label:?}: {accepted}/{requested} accepted after {attempts} draws")]
    BudgetExhausted { label: String, requested: usize, accepted: usize, attempts: usize },
    #[error("unknown control token for class {0:?}")]
    UnknownControl(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("external generator: {0}")]
    External(String),
}

/// Token inventory. Ids 0..3 are the begin, end and unknown sentinels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for s in [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN] {
            v.insert(s);
        }
        v
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, GeneratorError> {
        if tokens.len() < 3 || tokens[0] != BOS_TOKEN || tokens[1] != EOS_TOKEN || tokens[2] != UNK_TOKEN {
            return Err(GeneratorError::Format("vocabulary must start with the sentinels".into()));
        }
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for t in tokens {
            if v.index.contains_key(&t) {
                return Err(GeneratorError::Format(format!("duplicate vocabulary entry {t:?}")));
            }
            v.insert(&t);
        }
        Ok(v)
    }

    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens that can be predicted: everything but the begin sentinel.
    pub fn prediction_size(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Maps tokens to ids; unknown tokens map to the unknown sentinel.
    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }
}

/// Autoregressive next-token model over a fixed vocabulary.
pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    /// Number of conditioning tokens.
    fn order(&self) -> usize;

    /// Distribution over the whole vocabulary given the tokens emitted so far
    /// (begin padding is implicit). The begin sentinel always gets 0.
    fn next_distribution(&self, history: &[TokenId]) -> Vec<f64>;

    fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        self.next_distribution(history)[token as usize]
    }
}

/// Sum of log conditionals of every token (end sentinel excluded).
/// Out-of-vocabulary tokens are scored as the unknown sentinel.
pub fn log_likelihood<M: LanguageModel + ?Sized>(model: &M, corpus: &[Vec<String>]) -> f64 {
    corpus
        .iter()
        .map(|seq| {
            let ids = model.vocab().encode(seq);
            (0..ids.len()).map(|i| model.prob(&ids[..i], ids[i]).ln()).sum::<f64>()
        })
        .sum()
}

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MAX_TOKENS: usize = 100;
pub const DEFAULT_MIN_TOKENS: usize = 8;
/// Filtered generation gives up after this many draws per requested instance.
pub const DEFAULT_BUDGET_FACTOR: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub temperature: f64,
    pub top_k: usize,
    pub max_tokens: usize,
    pub min_tokens: usize,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_k: DEFAULT_TOP_K,
            max_tokens: DEFAULT_MAX_TOKENS,
            min_tokens: DEFAULT_MIN_TOKENS,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GeneratorError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.top_k == 0 {
            return Err(GeneratorError::Config("top_k must be at least 1".into()));
        }
        if self.max_tokens == 0 || self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(GeneratorError::Config(format!(
                "need 1 <= min_tokens ({}) <= max_tokens ({})",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Applies temperature then top-k truncation to a next-token distribution.
///
/// Probabilities are raised to `1/temperature` and renormalised; the `top_k`
/// largest survive (ties go to the lower token id) and are renormalised
/// again. Returns a full-length vector with zeros outside the kept set.
pub fn shape_distribution(dist: &[f64], temperature: f64, top_k: usize) -> Vec<f64> {
    let max_log = dist
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut scaled: Vec<f64> = dist
        .iter()
        .map(|&p| if p > 0.0 { ((p.ln() - max_log) / temperature).exp() } else { 0.0 })
        .collect();
    let mut order: Vec<usize> = (0..scaled.len()).filter(|&i| scaled[i] > 0.0).collect();
    // Stable sort keeps lower ids first among equal weights.
    order.sort_by(|&a, &b| scaled[b].partial_cmp(&scaled[a]).expect("finite weights"));
    for &i in order.iter().skip(top_k) {
        scaled[i] = 0.0;
    }
    let z: f64 = scaled.iter().sum();
    scaled.iter_mut().for_each(|p| *p /= z);
    scaled
}

fn draw_index<R: Rng>(shaped: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in shaped.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i as TokenId;
        }
    }
    last as TokenId
}

/// Samples one sequence, continuing `prefix` (not emitted), until the end
/// sentinel or `max_tokens` emitted tokens.
pub fn sample_ids<M: LanguageModel + ?Sized, R: Rng>(
    model: &M,
    prefix: &[TokenId],
    params: &GeneratorParams,
    rng: &mut R,
) -> Vec<TokenId> {
    let mut history = prefix.to_vec();
    let mut out = Vec::new();
    while out.len() < params.max_tokens {
        let shaped = shape_distribution(&model.next_distribution(&history), params.temperature, params.top_k);
        let next = draw_index(&shaped, rng);
        if next == EOS {
            break;
        }
        history.push(next);
        out.push(next);
    }
    out
}

/// Samples one token sequence seeded by `params.seed`.
pub fn sample<M: LanguageModel + ?Sized>(model: &M, params: &GeneratorParams) -> Vec<String> {
    let mut rng = seed::rng(params.seed);
    let ids = sample_ids(model, &[], params, &mut rng);
    ids.iter().map(|&t| model.vocab().token(t).to_owned()).collect()
}

/// Anything that can produce batches of raw token sequences.
pub trait SequenceSource {
    /// Draws `n` sequences. Identical `(params, seed)` must give identical output.
    fn draw(&mut self, n: usize, params: &GeneratorParams, seed: u64) -> Result<Vec<Vec<String>>, GeneratorError>;
}

impl<M: LanguageModel> SequenceSource for M {
    fn draw(&mut self, n: usize, params: &GeneratorParams, seed: u64) -> Result<Vec<Vec<String>>, GeneratorError> {
        let model: &M = self;
        let mut rng = seed::rng(seed);
        Ok((0..n)
            .map(|_| {
                sample_ids(model, &[], params, &mut rng)
                    .into_iter()
                    .map(|t| model.vocab().token(t).to_owned())
                    .collect()
            })
            .collect())
    }
}

/// A generator that can be specialised per relation type.
pub trait GeneratorBackend {
    /// Identifier recorded in synthetic-data provenance.
    fn id(&self) -> String;

    /// Specialises the generator on one relation type's sentences.
    fn adapt(&mut self, label: &str, corpus: &[Vec<String>]) -> Result<Box<dyn SequenceSource + '_>, GeneratorError>;
}

/// The built-in backend: a shared base n-gram model mixed with per-class fits.
#[derive(Debug, Clone)]
pub struct BuiltinGenerator {
    base: Arc<NGramLM>,
    lambda: f64,
}

impl BuiltinGenerator {
    pub fn new(base: NGramLM, lambda: f64) -> Result<Self, GeneratorError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(GeneratorError::Config(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { base: Arc::new(base), lambda })
    }

    /// Base fitted on an in-domain corpus.
    pub fn fitted(corpus: &[Vec<String>], order: usize, alpha: f64, lambda: f64) -> Result<Self, GeneratorError> {
        Self::new(NGramLM::fit(corpus, order, alpha)?, lambda)
    }

    /// Base with no in-domain knowledge: uniform over the corpus vocabulary.
    pub fn vanilla(vocabulary_corpus: &[Vec<String>], order: usize, alpha: f64, lambda: f64) -> Result<Self, GeneratorError> {
        let mut vocab = Vocab::new();
        for tok in vocabulary_corpus.iter().flatten() {
            vocab.insert(tok);
        }
        Self::new(NGramLM::unfitted(vocab, order, alpha)?, lambda)
    }

    pub fn base(&self) -> &Arc<NGramLM> {
        &self.base
    }
}

impl GeneratorBackend for BuiltinGenerator {
    fn id(&self) -> String {
        format!(
            "builtin-ngram(order={},alpha={},lambda={},fitted={})",
            self.base.order(),
            self.base.alpha(),
            self.lambda,
            self.base.is_fitted()
        )
    }

    fn adapt(&mut self, _label: &str, corpus: &[Vec<String>]) -> Result<Box<dyn SequenceSource + '_>, GeneratorError> {
        Ok(Box::new(adapt(&self.base, corpus, self.lambda)?))
    }
}

/// Outcome of filtered generation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredBatch {
    pub instances: Vec<RelationInstance>,
    /// Draw seed of each accepted instance.
    pub seeds: Vec<u64>,
    pub attempts: usize,
    pub rejected_mask: usize,
    pub rejected_length: usize,
}

impl FilteredBatch {
    pub fn rejected(&self) -> usize {
        self.rejected_mask + self.rejected_length
    }
}

/// True when `tokens` would be kept by the generation filter.
pub fn passes_filter(tokens: &[String], schema: &RelationSchema, min_tokens: usize) -> bool {
    tokens.len() >= min_tokens && schema.has_mask_pair(tokens)
}

/// Draws until `n` sequences hold each entity mask exactly once and have at
/// least `params.min_tokens` tokens, labelling them `label`.
///
/// Gives up after `budget` draws (default `100·n`).
pub fn generate_filtered(
    source: &mut dyn SequenceSource,
    params: &GeneratorParams,
    schema: &RelationSchema,
    n: usize,
    label: &str,
    budget: Option<usize>,
) -> Result<FilteredBatch, GeneratorError> {
    params.validate()?;
    if n == 0 {
        return Err(GeneratorError::Config("n must be at least 1".into()));
    }
    if schema.is_null(label) || schema.label_index(label).is_none() {
        return Err(GeneratorError::Config(format!("{label:?} is not a relation type")));
    }
    let budget = budget.unwrap_or(DEFAULT_BUDGET_FACTOR * n);
    let mut batch = FilteredBatch {
        instances: Vec::with_capacity(n),
        seeds: Vec::with_capacity(n),
        attempts: 0,
        rejected_mask: 0,
        rejected_length: 0,
    };
    let mut round = 0u64;
    while batch.instances.len() < n {
        let remaining_budget = budget - batch.attempts;
        if remaining_budget == 0 {
            return Err(GeneratorError::BudgetExhausted {
                label: label.to_owned(),
                requested: n,
                accepted: batch.instances.len(),
                attempts: batch.attempts,
            });
        }
        let want = (n - batch.instances.len()).min(remaining_budget);
        let round_seed = seed::derive(params.seed, round);
        round += 1;
        let samples = source.draw(want, params, round_seed)?;
        if samples.is_empty() {
            return Err(GeneratorError::External("source returned no samples".into()));
        }
        for tokens in samples.into_iter().take(want) {
            batch.attempts += 1;
            if !schema.has_mask_pair(&tokens) {
                batch.rejected_mask += 1;
            } else if tokens.len() < params.min_tokens {
                batch.rejected_length += 1;
            } else {
                let id = format!("synth-{label}-{:016x}-{}", params.seed, batch.instances.len());
                batch.instances.push(RelationInstance::new(id, tokens, label));
                batch.seeds.push(round_seed);
            }
        }
    }
    debug_assert!(batch.instances.iter().all(|i| passes_filter(&i.tokens, schema, params.min_tokens)));
    Ok(batch)
}
