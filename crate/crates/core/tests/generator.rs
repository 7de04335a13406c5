use std::collections::HashMap;
use std::sync::Arc;

use dare_core::corpus::RelationSchema;
use dare_core::generator::{
    self, adapt, log_likelihood, sample, shape_distribution, GeneratorParams, LanguageModel, NGramLM, BOS_TOKEN,
    EOS_TOKEN, UNK_TOKEN,
};
use proptest::prelude::*;

/// Independent interpolated add-α model computed straight from string counts.
struct Oracle {
    order: usize,
    alpha: f64,
    /// Prediction space: every vocabulary entry but the begin sentinel.
    space: Vec<String>,
    counts: HashMap<Vec<String>, HashMap<String, f64>>,
}

impl Oracle {
    fn fit(corpus: &[Vec<String>], order: usize, alpha: f64) -> Self {
        let mut space = vec![EOS_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        let mut counts: HashMap<Vec<String>, HashMap<String, f64>> = HashMap::new();
        for seq in corpus {
            for t in seq {
                if !space.contains(t) {
                    space.push(t.clone());
                }
            }
            let mut padded = vec![BOS_TOKEN.to_owned(); order];
            padded.extend(seq.iter().cloned());
            padded.push(EOS_TOKEN.to_owned());
            for i in order..padded.len() {
                for j in 0..=order {
                    *counts.entry(padded[i - j..i].to_vec()).or_default().entry(padded[i].clone()).or_default() += 1.0;
                }
            }
        }
        Self { order, alpha, space, counts }
    }

    fn prob(&self, history: &[String], w: &str) -> f64 {
        let mut padded = vec![BOS_TOKEN.to_owned(); self.order];
        padded.extend(history.iter().cloned());
        let v = self.space.len() as f64;
        let count = |ctx: &[String], w: Option<&str>| -> f64 {
            self.counts.get(ctx).map_or(0.0, |m| match w {
                Some(w) => m.get(w).copied().unwrap_or(0.0),
                None => m.values().sum(),
            })
        };
        let mut p = (count(&[], Some(w)) + self.alpha) / (count(&[], None) + self.alpha * v);
        for j in 1..=self.order {
            let ctx = &padded[padded.len() - j..];
            p = (count(ctx, Some(w)) + self.alpha * v * p) / (count(ctx, None) + self.alpha * v);
        }
        p
    }

    fn log_likelihood(&self, corpus: &[Vec<String>]) -> f64 {
        let mut total = 0.0;
        for seq in corpus {
            let mapped: Vec<String> =
                seq.iter().map(|t| if self.space.contains(t) { t.clone() } else { UNK_TOKEN.to_owned() }).collect();
            for i in 0..mapped.len() {
                total += self.prob(&mapped[..i], &mapped[i]).ln();
            }
        }
        total
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

fn small_corpus() -> Vec<Vec<String>> {
    ["the drug may cause harm", "the drug may induce harm .", "a dose may cause fever", "fever may follow the dose"]
        .iter()
        .map(|s| toks(s))
        .collect()
}

fn corpus_over(words: Vec<&'static str>) -> impl Strategy<Value = Vec<Vec<String>>> {
    let word = prop::sample::select(words).prop_map(str::to_owned);
    prop::collection::vec(prop::collection::vec(word, 1..7), 1..8)
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    corpus_over(vec!["a", "b", "c", "d", "e", "f"])
}

#[test]
fn log_likelihood_matches_brute_force_oracle() {
    let corpus = small_corpus();
    for order in 0..=3 {
        let model = NGramLM::fit(&corpus, order, 0.1).unwrap();
        let oracle = Oracle::fit(&corpus, order, 0.1);
        let held_out = vec![toks("the dose may cause harm"), toks("unseen words here"), toks("fever")];
        for c in [&corpus, &held_out] {
            let got = log_likelihood(&model, c);
            let want = oracle.log_likelihood(c);
            assert!((got - want).abs() < 1e-9, "order {order}: {got} vs {want}");
        }
    }
}

#[test]
fn conditionals_match_oracle_pointwise() {
    let corpus = small_corpus();
    let model = NGramLM::fit(&corpus, 3, 0.25).unwrap();
    let oracle = Oracle::fit(&corpus, 3, 0.25);
    for history in [vec![], toks("the"), toks("the drug may"), toks("fever may follow the")] {
        let ids = model.vocab().encode(&history);
        let dist = model.next_distribution(&ids);
        for w in &oracle.space {
            let id = model.vocab().id(w).unwrap() as usize;
            assert!((dist[id] - oracle.prob(&history, w)).abs() < 1e-12, "{history:?} -> {w}");
        }
        assert_eq!(dist[0], 0.0, "begin sentinel is never predicted");
    }
}

#[test]
fn empirical_first_token_frequencies_match_conditionals() {
    let corpus = small_corpus();
    let model = NGramLM::fit(&corpus, 2, 0.1).unwrap();
    let n = 10_000;
    let params = GeneratorParams { top_k: model.vocab().len(), max_tokens: 1, ..GeneratorParams::default() };
    let mut freq: HashMap<String, f64> = HashMap::new();
    for s in 0..n {
        let seq = sample(&model, &params.with_seed(s));
        let first = seq.first().cloned().unwrap_or_else(|| EOS_TOKEN.to_owned());
        *freq.entry(first).or_default() += 1.0;
    }
    let dist = model.next_distribution(&[]);
    for (id, &p) in dist.iter().enumerate().skip(1) {
        let tok = model.vocab().token(id as u32);
        let f = freq.get(tok).copied().unwrap_or(0.0) / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * se + 1e-12, "{tok}: empirical {f} vs {p} (se {se})");
    }
}

#[test]
fn filtered_generation_from_masked_class_corpus() {
    let schema = RelationSchema::with_types(["cid"]).unwrap();
    let positives: Vec<Vec<String>> = (0..40)
        .map(|i| toks(&format!("in study {i} , ENTITY_A was shown to induce ENTITY_B in rats .")))
        .collect();
    let base = Arc::new(NGramLM::fit(&positives, 3, 0.1).unwrap());
    let mut model = adapt(&base, &positives, 0.7).unwrap();
    let batch =
        generator::generate_filtered(&mut model, &GeneratorParams::default(), &schema, 100, "cid", None).unwrap();
    assert_eq!(batch.instances.len(), 100);
    assert!(batch.instances.iter().all(|i| generator::passes_filter(&i.tokens, &schema, 8)));
    assert_eq!(batch.attempts, 100 + batch.rejected());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_distribution_sums_to_one(
        corpus in corpus_strategy(),
        class in corpus_strategy(),
        lambda in 0.0f64..=1.0,
        temperature in 0.2f64..3.0,
        top_k in 1usize..10,
        history in prop::collection::vec(0u32..10, 0..5),
    ) {
        let base = Arc::new(NGramLM::fit(&corpus, 2, 0.1).unwrap());
        let adapted = adapt(&base, &class, lambda).unwrap();
        let v = adapted.vocab().len() as u32;
        let history: Vec<u32> = history.into_iter().map(|t| 1 + t % (v - 1)).collect();
        let base_hist: Vec<u32> = history.iter().map(|&t| t.min(base.vocab().len() as u32 - 1)).collect();
        for dist in [base.next_distribution(&base_hist), adapted.class_model().next_distribution(&history), adapted.next_distribution(&history)] {
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shaped = shape_distribution(&dist, temperature, top_k);
            prop_assert!((shaped.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(shaped.iter().filter(|p| **p > 0.0).count() <= top_k);
        }
    }

    #[test]
    fn sampling_is_deterministic(corpus in corpus_strategy(), s in any::<u64>()) {
        let model = NGramLM::fit(&corpus, 2, 0.1).unwrap();
        let params = GeneratorParams::default().with_seed(s);
        prop_assert_eq!(sample(&model, &params), sample(&model, &params));
    }

    #[test]
    fn adaptation_endpoints_reproduce_components(corpus in corpus_strategy(), class in corpus_strategy()) {
        let base = Arc::new(NGramLM::fit(&corpus, 2, 0.1).unwrap());
        let zero = adapt(&base, &class, 0.0).unwrap();
        let one = adapt(&base, &class, 1.0).unwrap();
        for history in [vec![], vec![3u32], vec![3, 4]] {
            let history: Vec<u32> = history.into_iter().filter(|&t| (t as usize) < zero.vocab().len()).collect();
            prop_assert_eq!(zero.next_distribution(&history), zero.base().next_distribution(&history));
            prop_assert_eq!(one.next_distribution(&history), one.class_model().next_distribution(&history));
        }
    }

    #[test]
    // The class corpus leans on words the base rarely or never sees, so its
    // maximum-likelihood estimate differs from the base's.
    fn full_adaptation_never_lowers_class_likelihood(
        corpus in corpus_over(vec!["c", "d", "e", "f"]),
        class in corpus_over(vec!["a", "b", "c"]),
    ) {
        let base = Arc::new(NGramLM::fit(&corpus, 2, 0.1).unwrap());
        let adapted = adapt(&base, &class, 1.0).unwrap();
        let before = log_likelihood(base.as_ref(), &class);
        let after = log_likelihood(&adapted, &class);
        prop_assert!(after >= before - 1e-9, "{after} < {before}");
    }
}
