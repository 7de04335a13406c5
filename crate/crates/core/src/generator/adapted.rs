use std::sync::Arc;

use super::{GeneratorError, LanguageModel, NGramLM, TokenId, Vocab};

pub const DEFAULT_LAMBDA: f64 = 0.7;

/// A base model specialised to one relation type by linear interpolation
/// with a model fitted on that type's sentences:
/// `P(w | h) = λ·P_class(w | h) + (1 − λ)·P_base(w | h)`.
#[derive(Debug, Clone)]
pub struct AdaptedLM {
    base: Arc<NGramLM>,
    class_model: NGramLM,
    lambda: f64,
}

impl AdaptedLM {
    pub fn base(&self) -> &NGramLM {
        &self.base
    }

    pub fn class_model(&self) -> &NGramLM {
        &self.class_model
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Fits a class model on `class_corpus` with the base's order, smoothing and
/// vocabulary, and mixes it with the base.
///
/// Tokens the base has never seen extend the vocabulary of both components;
/// when there are none the base is reused as is.
pub fn adapt(base: &Arc<NGramLM>, class_corpus: &[Vec<String>], lambda: f64) -> Result<AdaptedLM, GeneratorError> {
    if class_corpus.is_empty() {
        return Err(GeneratorError::EmptyCorpus);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(GeneratorError::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let class_model = NGramLM::fit_with_vocab(class_corpus, base.vocab().clone(), base.order(), base.alpha())?;
    let base = if class_model.vocab().len() == base.vocab().len() {
        Arc::clone(base)
    } else {
        Arc::new(base.with_vocab(class_model.vocab()))
    };
    Ok(AdaptedLM { base, class_model, lambda })
}

impl LanguageModel for AdaptedLM {
    fn vocab(&self) -> &Vocab {
        self.class_model.vocab()
    }

    fn order(&self) -> usize {
        self.class_model.order()
    }

    fn next_distribution(&self, history: &[TokenId]) -> Vec<f64> {
        let mut d = self.class_model.next_distribution(history);
        if self.lambda == 1.0 {
            return d;
        }
        let b = self.base.next_distribution(history);
        for (p, q) in d.iter_mut().zip(b) {
            *p = self.lambda * *p + (1.0 - self.lambda) * q;
        }
        d
    }

    fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let c = self.class_model.prob(history, token);
        if self.lambda == 1.0 {
            return c;
        }
        self.lambda * c + (1.0 - self.lambda) * self.base.prob(history, token)
    }
}
