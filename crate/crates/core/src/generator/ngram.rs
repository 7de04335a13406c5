use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratorError, LanguageModel, TokenId, Vocab, BOS};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;
const FORMAT: &str = "dare-ngram/1";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Interpolated add-α n-gram model.
///
/// The unigram level is add-α over the prediction space `V'` (every token
/// but the begin sentinel). Each higher level `j` interpolates its own counts
/// with level `j-1` using a prior mass of `α·|V'|`:
///
/// `P_j(w | h) = (c(h, w) + α|V'|·P_{j-1}(w | h')) / (c(h) + α|V'|)`
///
/// so a uniform lower level reduces it to plain add-α. Contexts are the last
/// `j` tokens of the history padded on the left with begin sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    alpha: f64,
    vocab: Vocab,
    /// `levels[j]` maps a context of length `j` to its continuation counts.
    levels: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
}

impl NGramLM {
    /// A model with no counts: every next-token distribution is uniform over `vocab`.
    pub fn unfitted(vocab: Vocab, order: usize, alpha: f64) -> Result<Self, GeneratorError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GeneratorError::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { order, alpha, vocab, levels: vec![HashMap::new(); order + 1] })
    }

    /// Fits counts on `corpus`; the vocabulary is built from the corpus.
    pub fn fit(corpus: &[Vec<String>], order: usize, alpha: f64) -> Result<Self, GeneratorError> {
        Self::fit_with_vocab(corpus, Vocab::new(), order, alpha)
    }

    /// Fits on `corpus`, starting from `vocab` and extending it with unseen tokens.
    pub fn fit_with_vocab(
        corpus: &[Vec<String>],
        mut vocab: Vocab,
        order: usize,
        alpha: f64,
    ) -> Result<Self, GeneratorError> {
        if corpus.is_empty() {
            return Err(GeneratorError::EmptyCorpus);
        }
        if corpus.iter().any(Vec::is_empty) {
            return Err(GeneratorError::Config("corpus contains an empty sequence".into()));
        }
        for seq in corpus {
            for tok in seq {
                vocab.insert(tok);
            }
        }
        let mut model = Self::unfitted(vocab, order, alpha)?;
        for seq in corpus {
            let ids = model.vocab.encode(seq);
            model.add_sequence(&ids);
        }
        Ok(model)
    }

    fn add_sequence(&mut self, ids: &[TokenId]) {
        let mut padded = vec![BOS; self.order];
        padded.extend_from_slice(ids);
        padded.push(super::EOS);
        for i in self.order..padded.len() {
            let target = padded[i];
            for j in 0..=self.order {
                let ctx = padded[i - j..i].to_vec();
                let entry = self.levels[j].entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(target).or_default() += 1;
            }
        }
    }

    /// Same counts over a larger vocabulary. Existing token ids are preserved.
    pub fn with_vocab(&self, vocab: &Vocab) -> Self {
        let mut merged = self.vocab.clone();
        for tok in vocab.tokens() {
            merged.insert(tok);
        }
        Self { vocab: merged, ..self.clone() }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_fitted(&self) -> bool {
        self.levels[0].values().any(|c| c.total > 0)
    }

    /// Raw count of `token` after `context`, `context` being exactly the
    /// conditioning tokens (length ≤ order).
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.levels
            .get(context.len())
            .and_then(|l| l.get(context))
            .and_then(|c| c.next.get(&token).copied())
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.levels.get(context.len()).and_then(|l| l.get(context)).map_or(0, |c| c.total)
    }

    fn padded_context(&self, history: &[TokenId]) -> Vec<TokenId> {
        let mut ctx = vec![BOS; self.order.saturating_sub(history.len())];
        let start = history.len().saturating_sub(self.order);
        ctx.extend_from_slice(&history[start..]);
        ctx
    }

    fn prior_mass(&self) -> f64 {
        self.alpha * self.vocab.prediction_size() as f64
    }

    pub fn save(&self, path: &Path) -> Result<(), GeneratorError> {
        let text = serde_json::to_string(&self.to_persisted())?;
        std::fs::write(path, text).map_err(|e| GeneratorError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeneratorError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_persisted()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let p: PersistedNGram = serde_json::from_str(text)?;
        if p.format != FORMAT {
            return Err(GeneratorError::Format(format!("unsupported model format {:?}", p.format)));
        }
        let vocab = Vocab::from_tokens(p.vocab)?;
        let mut model = Self::unfitted(vocab, p.order, p.alpha)?;
        if p.counts.len() != p.order + 1 {
            return Err(GeneratorError::Format("count table depth does not match order".into()));
        }
        for (j, level) in p.counts.into_iter().enumerate() {
            for entry in level {
                if entry.context.len() != j {
                    return Err(GeneratorError::Format(format!("context of length {} at level {j}", entry.context.len())));
                }
                let mut counts = ContextCounts::default();
                for (tok, c) in entry.next {
                    if tok as usize >= model.vocab.len() || c == 0 {
                        return Err(GeneratorError::Format("count entry out of range".into()));
                    }
                    counts.total += c;
                    counts.next.insert(tok, c);
                }
                model.levels[j].insert(entry.context, counts);
            }
        }
        Ok(model)
    }

    fn to_persisted(&self) -> PersistedNGram {
        let counts = self
            .levels
            .iter()
            .map(|level| {
                let mut entries: Vec<PersistedContext> = level
                    .iter()
                    .map(|(ctx, c)| PersistedContext {
                        context: ctx.clone(),
                        next: c.next.iter().map(|(t, n)| (*t, *n)).collect(),
                    })
                    .collect();
                entries.sort_by(|a, b| a.context.cmp(&b.context));
                entries
            })
            .collect();
        PersistedNGram {
            format: FORMAT.to_string(),
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.tokens().to_vec(),
            counts,
        }
    }
}

impl LanguageModel for NGramLM {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn order(&self) -> usize {
        self.order
    }

    fn next_distribution(&self, history: &[TokenId]) -> Vec<f64> {
        let ctx = self.padded_context(history);
        let v = self.vocab.len();
        let prior = self.prior_mass();
        let uni = self.levels[0].get(&Vec::new());
        let n = uni.map_or(0, |c| c.total) as f64;
        let mut dist: Vec<f64> = (0..v as TokenId)
            .map(|t| {
                if t == BOS {
                    0.0
                } else {
                    let c = uni.and_then(|u| u.next.get(&t)).copied().unwrap_or(0) as f64;
                    (c + self.alpha) / (n + prior)
                }
            })
            .collect();
        for j in 1..=self.order {
            let h = &ctx[self.order - j..];
            let Some(counts) = self.levels[j].get(h) else { continue };
            let denom = counts.total as f64 + prior;
            for p in dist.iter_mut() {
                *p *= prior / denom;
            }
            for (&t, &c) in &counts.next {
                dist[t as usize] += c as f64 / denom;
            }
        }
        dist
    }

    fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        if token == BOS {
            return 0.0;
        }
        let ctx = self.padded_context(history);
        let prior = self.prior_mass();
        let mut p = (self.count(&[], token) as f64 + self.alpha) / (self.context_total(&[]) as f64 + prior);
        for j in 1..=self.order {
            let h = &ctx[self.order - j..];
            let total = self.context_total(h);
            if total > 0 {
                p = (self.count(h, token) as f64 + prior * p) / (total as f64 + prior);
            }
        }
        p
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedNGram {
    format: String,
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    counts: Vec<Vec<PersistedContext>>,
}

#[derive(Serialize, Deserialize)]
struct PersistedContext {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}
