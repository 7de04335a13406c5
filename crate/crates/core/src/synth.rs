//! Template-grammar fixtures.
//!
//! Sentences are built as `opener + clause + closer`, where the clause joins
//! the two entity masks with a phrase whose pattern depends on the label.
//! Negatives are hard: negated or reversed relation phrases, other
//! relations (treatment) and neutral co-mentions share most of the
//! positive vocabulary. Trigger verbs are Zipf-distributed so small positive
//! samples miss the rarer ones. The same grammar without labels yields an
//! unlabelled in-domain corpus over the task vocabulary.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, RelationInstance, RelationSchema};
use crate::seed;

const OPENERS: &[&str] = &[
    "",
    "in this study ,",
    "we found that",
    "results indicate that",
    "interestingly ,",
    "in addition ,",
    "these data suggest that",
    "it was observed that",
    "clinically ,",
    "furthermore ,",
    "our findings show that",
    "in conclusion ,",
];

const CLOSERS: &[&str] = &[
    ".",
    "in rats .",
    "in patients .",
    "in mice .",
    "after chronic exposure .",
    "in a dose dependent manner .",
    "in elderly patients .",
    "during treatment .",
    "in most cases .",
    "at high doses .",
    "in healthy volunteers .",
];

const POS_MODALS: &[&str] = &[
    "may",
    "can",
    "is known to",
    "was found to",
    "appears to",
    "is reported to",
    "was shown to",
    "is likely to",
];

/// Trigger verbs, most frequent first.
const TRIGGERS: &[&str] = &[
    "induce",
    "cause",
    "trigger",
    "provoke",
    "precipitate",
    "aggravate",
    "produce",
    "exacerbate",
    "elicit",
    "promote",
    "worsen",
    "evoke",
    "unmask",
    "accelerate",
];

const NEG_MODALS: &[&str] = &[
    "did not",
    "does not",
    "failed to",
    "was not found to",
    "cannot",
    "is unlikely to",
    "did not appear to",
];

const OTHER_RELATIONS: &[&str] = &[
    "was used to treat",
    "alleviated",
    "protected against",
    "reduced",
    "prevented",
    "improved",
    "was effective against",
    "attenuated",
    "is indicated for",
    "reversed",
];

/// Base forms of the other relations, used after a modal.
const OTHER_VERBS: &[&str] = &[
    "treat",
    "alleviate",
    "protect against",
    "reduce",
    "prevent",
    "improve",
    "attenuate",
    "reverse",
];

const NEUTRAL: &[&str] = &[
    "and",
    "was administered before",
    "was given together with",
    "was measured alongside",
    "was compared with",
    "was recorded before",
    "was studied in patients with",
];

/// Phrase banks for relation types beyond the first.
const EXTRA_BANKS: &[&[&str]] = &[
    &["should be avoided with", "is not recommended with", "requires caution with", "should be monitored with"],
    &["increases the effect of", "potentiates", "enhances the toxicity of", "augments the response to"],
    &["interacts with", "has an interaction with", "may interact with", "shows interactions with"],
    &["decreases the clearance of", "inhibits the metabolism of", "raises plasma levels of", "reduces absorption of"],
];

const ADVERBS: &[&str] = &["", "", "significantly", "markedly", "reportedly", "clearly"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NegativeKind {
    Negated,
    Reversed,
    OtherRelation,
    Neutral,
}

const NEGATIVE_KINDS: &[(NegativeKind, u32)] = &[
    (NegativeKind::Negated, 3),
    (NegativeKind::Reversed, 2),
    (NegativeKind::OtherRelation, 3),
    (NegativeKind::Neutral, 2),
];

struct Grammar {
    trigger_dist: WeightedIndex<f64>,
    kind_dist: WeightedIndex<u32>,
}

impl Grammar {
    fn new() -> Self {
        let weights: Vec<f64> = (0..TRIGGERS.len()).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        Self {
            trigger_dist: WeightedIndex::new(weights).expect("positive weights"),
            kind_dist: WeightedIndex::new(NEGATIVE_KINDS.iter().map(|k| k.1)).expect("positive weights"),
        }
    }

    fn trigger(&self, rng: &mut ChaCha8Rng) -> &'static str {
        TRIGGERS[self.trigger_dist.sample(rng)]
    }

    /// Connecting phrase for relation type `k`.
    fn relation_phrase(&self, k: usize, rng: &mut ChaCha8Rng) -> String {
        if k == 0 {
            format!("{} {}", pick(POS_MODALS, rng), self.trigger(rng))
        } else {
            let bank = EXTRA_BANKS[(k - 1) % EXTRA_BANKS.len()];
            join(&[pick(ADVERBS, rng), pick(bank, rng)])
        }
    }

    /// Clause with entity slots `a` and `b` for label `k` (`None` = null).
    fn clause(&self, label: Option<usize>, n_relations: usize, a: &str, b: &str, rng: &mut ChaCha8Rng) -> String {
        match label {
            Some(k) => format!("{a} {} {b}", self.relation_phrase(k, rng)),
            None => {
                let kind = NEGATIVE_KINDS[self.kind_dist.sample(rng)].0;
                let k = rng.gen_range(0..n_relations);
                match kind {
                    NegativeKind::Negated if k == 0 => {
                        format!("{a} {} {} {b}", pick(NEG_MODALS, rng), self.trigger(rng))
                    }
                    NegativeKind::Negated => {
                        format!("there was no evidence that {a} {} {b}", self.relation_phrase(k, rng))
                    }
                    NegativeKind::Reversed => format!("{b} {} {a}", self.relation_phrase(k, rng)),
                    NegativeKind::OtherRelation if rng.gen_bool(0.5) => {
                        format!("{a} {} {} {b}", pick(POS_MODALS, rng), pick(OTHER_VERBS, rng))
                    }
                    NegativeKind::OtherRelation => format!("{a} {} {b}", pick(OTHER_RELATIONS, rng)),
                    NegativeKind::Neutral => format!("{a} {} {b}", pick(NEUTRAL, rng)),
                }
            }
        }
    }

    fn sentence(&self, label: Option<usize>, n_relations: usize, a: &str, b: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
        let text = join(&[pick(OPENERS, rng), &self.clause(label, n_relations, a, b, rng), pick(CLOSERS, rng)]);
        text.split_whitespace().map(str::to_owned).collect()
    }
}

fn pick<'a>(items: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    items.choose(rng).copied().expect("non-empty list")
}

fn join(parts: &[&str]) -> String {
    parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ")
}

/// Instances with exactly `counts[k]` of label `k` (label-index order, null last), shuffled.
fn labelled_split(
    grammar: &Grammar,
    schema: &RelationSchema,
    counts: &[usize],
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<RelationInstance> {
    let null = schema.null_index();
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k, n)).collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, k)| {
            let label = (k != null).then_some(k);
            let tokens = grammar.sentence(label, schema.num_relations(), schema.mask_a(), schema.mask_b(), rng);
            RelationInstance::new(format!("{prefix}{i}"), tokens, schema.label_name(k))
        })
        .collect()
}

/// Sizes of the two-class imbalance task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub train_positives: usize,
    pub train_negatives: usize,
    pub dev_positives: usize,
    pub dev_negatives: usize,
    pub test_positives: usize,
    pub test_negatives: usize,
    /// Unlabelled in-domain sentences.
    pub in_domain: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            train_positives: 50,
            train_negatives: 2000,
            dev_positives: 60,
            dev_negatives: 240,
            test_positives: 400,
            test_negatives: 1600,
            in_domain: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub dataset: Dataset,
    pub in_domain: Vec<Vec<String>>,
}

/// One relation type (`induce`) against null.
pub fn imbalance_task(spec: &TaskSpec) -> SyntheticTask {
    let schema = RelationSchema::with_types(["induce"]).expect("valid schema");
    let grammar = Grammar::new();
    let mut rng = seed::rng(spec.seed);
    let train = labelled_split(&grammar, &schema, &[spec.train_positives, spec.train_negatives], "train-", &mut rng);
    let dev = labelled_split(&grammar, &schema, &[spec.dev_positives, spec.dev_negatives], "dev-", &mut rng);
    let test = labelled_split(&grammar, &schema, &[spec.test_positives, spec.test_negatives], "test-", &mut rng);
    let in_domain = in_domain_corpus(&grammar, &schema, spec.in_domain, &mut rng);
    let dataset = Dataset::new(schema, train, dev, test).expect("fixture validates");
    SyntheticTask { dataset, in_domain }
}

fn in_domain_corpus(
    grammar: &Grammar,
    schema: &RelationSchema,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    let n_relations = schema.num_relations();
    (0..n)
        .map(|_| {
            let label = if rng.gen_bool(0.4) { Some(rng.gen_range(0..n_relations)) } else { None };
            grammar.sentence(label, n_relations, schema.mask_a(), schema.mask_b(), rng)
        })
        .collect()
}

/// Unlabelled in-domain sentences for a schema with `n_relations` types.
pub fn in_domain_sentences(schema: &RelationSchema, n: usize, seed: u64) -> Vec<Vec<String>> {
    in_domain_corpus(&Grammar::new(), schema, n, &mut seed::rng(seed))
}

/// Dataset with exact per-label train counts (label-index order, null last);
/// dev and test follow the train label proportions.
pub fn shaped_dataset(schema: RelationSchema, train_counts: &[usize], dev: usize, test: usize, seed: u64) -> Dataset {
    assert_eq!(train_counts.len(), schema.num_labels(), "one count per label");
    let grammar = Grammar::new();
    let mut rng = seed::rng(seed);
    let total: usize = train_counts.iter().sum();
    let scale = |n: usize| -> Vec<usize> {
        let mut v: Vec<usize> = train_counts.iter().map(|&c| seed::round_half_up(c as f64 * n as f64 / total as f64).max(1)).collect();
        let sum: usize = v.iter().sum();
        let null = v.len() - 1;
        v[null] = (v[null] + n).saturating_sub(sum).max(1);
        v
    };
    let train = labelled_split(&grammar, &schema, train_counts, "train-", &mut rng);
    let dev = labelled_split(&grammar, &schema, &scale(dev), "dev-", &mut rng);
    let test = labelled_split(&grammar, &schema, &scale(test), "test-", &mut rng);
    Dataset::new(schema, train, dev, test).expect("fixture validates")
}

/// Train split shaped like CDR: 3,597 instances, 1,453 positive.
pub fn cdr_shaped(dev: usize, test: usize, seed: u64) -> Dataset {
    let schema = RelationSchema::with_types(["cid"]).expect("valid schema");
    shaped_dataset(schema, &[1453, 3597 - 1453], dev, test, seed)
}

/// Train split shaped like DDI2013: 22,501 instances, positives 153/658/1,083/1,353.
pub fn ddi_shaped(dev: usize, test: usize, seed: u64) -> Dataset {
    let schema = RelationSchema::with_types(["advise", "effect", "int", "mechanism"]).expect("valid schema");
    let positives = 153 + 658 + 1083 + 1353;
    shaped_dataset(schema, &[153, 658, 1083, 1353, 22_501 - positives], dev, test, seed)
}
