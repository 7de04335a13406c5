use std::collections::BTreeMap;

use rand::Rng;

use super::{sample_ids, GeneratorError, GeneratorParams, LanguageModel, NGramLM, TokenId, BOS, EOS};
use crate::corpus::{RelationInstance, RelationSchema};

/// One model over all relation types, each training sentence prefixed with a
/// control token naming its class (`<0>:`, `<1>:`, ...).
///
/// Kept to reproduce the joint-conditional alternative to per-class
/// adaptation; the default pipeline does not use it.
#[derive(Debug, Clone)]
pub struct JointConditionalLM {
    model: NGramLM,
    /// Relation type → control token id.
    controls: BTreeMap<String, TokenId>,
}

pub fn control_token(index: usize) -> String {
    format!("<{index}>:")
}

/// Fits the joint model on every non-null instance of `train`, sharing the
/// base model's vocabulary, order and smoothing.
pub fn joint_conditional_fit(
    base: &NGramLM,
    train: &[RelationInstance],
    schema: &RelationSchema,
) -> Result<JointConditionalLM, GeneratorError> {
    let corpus: Vec<Vec<String>> = train
        .iter()
        .filter_map(|inst| {
            let idx = schema.label_index(&inst.label).filter(|&i| i != schema.null_index())?;
            let mut seq = Vec::with_capacity(inst.tokens.len() + 1);
            seq.push(control_token(idx));
            seq.extend(inst.tokens.iter().cloned());
            Some(seq)
        })
        .collect();
    if corpus.is_empty() {
        return Err(GeneratorError::EmptyCorpus);
    }
    let mut vocab = base.vocab().clone();
    let controls = schema
        .relation_types()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), vocab.insert(&control_token(i))))
        .collect();
    let model = NGramLM::fit_with_vocab(&corpus, vocab, base.order(), base.alpha())?;
    Ok(JointConditionalLM { model, controls })
}

impl JointConditionalLM {
    pub fn model(&self) -> &NGramLM {
        &self.model
    }

    /// Samples a sentence prompted with the control token of `label`.
    pub fn sample_for<R: Rng>(
        &self,
        label: &str,
        params: &GeneratorParams,
        rng: &mut R,
    ) -> Result<Vec<String>, GeneratorError> {
        let ctrl = *self.controls.get(label).ok_or_else(|| GeneratorError::UnknownControl(label.to_owned()))?;
        Ok(self.decode(&sample_ids(&self.model, &[ctrl], params, rng)))
    }

    /// Samples without a prompt: the first token drawn decides the class.
    /// Returns `None` as the label when the draw did not start with a control token.
    pub fn sample_unconditioned<R: Rng>(
        &self,
        params: &GeneratorParams,
        rng: &mut R,
    ) -> (Option<String>, Vec<String>) {
        let first = self.draw_first(params, rng);
        let label = self.controls.iter().find(|(_, &id)| id == first).map(|(l, _)| l.clone());
        if first == EOS {
            return (label, Vec::new());
        }
        let mut rest = sample_ids(&self.model, &[first], params, rng);
        if label.is_none() {
            rest.insert(0, first);
        }
        (label, self.decode(&rest))
    }

    fn draw_first<R: Rng>(&self, params: &GeneratorParams, rng: &mut R) -> TokenId {
        let one = GeneratorParams { max_tokens: 1, ..params.clone() };
        sample_ids(&self.model, &[], &one, rng).first().copied().unwrap_or(EOS)
    }

    fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .filter(|&&t| t != BOS && !self.controls.values().any(|&c| c == t))
            .map(|&t| self.model.vocab().token(t).to_owned())
            .collect()
    }
}
