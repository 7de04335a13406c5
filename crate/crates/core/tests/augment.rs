use std::collections::BTreeMap;

use dare_core::augment::{self, plurality, EnsembleConfig, SyntheticPool};
use dare_core::classifier::LinearBackend;
use dare_core::corpus::{self, Dataset, RelationInstance, RelationSchema};
use dare_core::generator::{BuiltinGenerator, GeneratorParams};
use dare_core::synth::{self, TaskSpec};
use proptest::prelude::*;
use rand::Rng;

/// Brute-force plurality: most votes wins; null wins any tie it is part of;
/// otherwise the lowest tied index.
fn vote_oracle(decisions: &[usize], null: usize) -> usize {
    let count = |k: usize| decisions.iter().filter(|&&d| d == k).count();
    let top = (0..=null).map(count).max().unwrap();
    if count(null) == top {
        return null;
    }
    (0..null).find(|&k| count(k) == top).unwrap()
}

#[test]
fn plurality_matches_oracle_on_random_tables() {
    let mut rng = dare_core::seed::rng(5);
    for _ in 0..1000 {
        let null = rng.gen_range(1..5);
        let members = rng.gen_range(1..21);
        let decisions: Vec<usize> = (0..members).map(|_| rng.gen_range(0..=null)).collect();
        assert_eq!(plurality(&decisions, null), vote_oracle(&decisions, null), "{decisions:?}");
    }
}

proptest! {
    #[test]
    fn plurality_ignores_member_order(decisions in prop::collection::vec(0usize..4, 1..20), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = decisions.clone();
        shuffled.shuffle(&mut dare_core::seed::rng(seed));
        prop_assert_eq!(plurality(&decisions, 3), plurality(&shuffled, 3));
    }

    #[test]
    fn partition_covers_every_positive_once(labels in prop::collection::vec(0usize..4, 0..50)) {
        let schema = RelationSchema::with_types(["a", "b", "c"]).unwrap();
        let split: Vec<RelationInstance> = labels
            .iter()
            .enumerate()
            .map(|(i, &k)| RelationInstance::from_text(format!("i{i}"), "ENTITY_A x ENTITY_B", schema.label_name(k)))
            .collect();
        let p = corpus::partition_by_class(&split, &schema);
        prop_assert_eq!(p.by_class.len(), 3);
        let total: usize = p.sizes().values().sum();
        prop_assert_eq!(total + p.null_count, split.len());
        for (label, members) in &p.by_class {
            prop_assert!(members.iter().all(|m| &m.label == label));
        }
    }

    #[test]
    fn split_dev_sizes_and_disjointness(n in 2usize..200, fraction in 0.05f64..0.5, seed in any::<u64>()) {
        let train: Vec<RelationInstance> =
            (0..n).map(|i| RelationInstance::from_text(format!("i{i}"), "ENTITY_A x ENTITY_B", "null")).collect();
        let k = dare_core::seed::round_half_up(fraction * n as f64);
        match corpus::split_dev(&train, fraction, seed) {
            Ok((rest, dev)) => {
                prop_assert_eq!(dev.len(), k);
                prop_assert_eq!(rest.len() + dev.len(), n);
                let mut ids: Vec<&str> = rest.iter().chain(&dev).map(|i| i.id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                prop_assert_eq!(ids.len(), n);
            }
            Err(_) => prop_assert!(k == 0 || k >= n),
        }
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let d = synth::shaped_dataset(RelationSchema::with_types(["x", "y"]).unwrap(), &[5, 7, 20], 10, 10, 3);
    let dir = tempfile::tempdir().unwrap();
    corpus::write_dataset(dir.path(), &d).unwrap();
    let back = corpus::load_dataset_dir(dir.path()).unwrap();
    assert_eq!(back.schema, d.schema);
    assert_eq!((back.train, back.dev, back.test), (d.train.clone(), d.dev.clone(), d.test.clone()));
    let first = std::fs::read(dir.path().join("train.jsonl")).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    corpus::write_dataset(dir2.path(), &corpus::load_dataset_dir(dir.path()).unwrap()).unwrap();
    assert_eq!(std::fs::read(dir2.path().join("train.jsonl")).unwrap(), first);
}

fn small_task() -> Dataset {
    synth::imbalance_task(&TaskSpec {
        train_positives: 20,
        train_negatives: 300,
        dev_negatives: 100,
        dev_positives: 20,
        test_positives: 50,
        test_negatives: 200,
        in_domain: 0,
        seed: 9,
    })
    .dataset
}

fn pool_for(d: &Dataset, seed: u64) -> SyntheticPool {
    let sentences: Vec<Vec<String>> = d.train.iter().map(|i| i.tokens.clone()).collect();
    let mut backend = BuiltinGenerator::fitted(&sentences, 3, 0.1, 0.7).unwrap();
    augment::build_pool(d, &mut backend, &GeneratorParams::default().with_seed(seed), 5.0).unwrap()
}

#[test]
fn pool_has_multiplier_times_gold_per_class() {
    let d = small_task();
    let pool = pool_for(&d, 1);
    assert_eq!(pool.per_class["induce"].len(), 100);
    assert!(pool.instances().all(|i| i.label == "induce" && d.schema.has_mask_pair(&i.tokens)));
    assert_eq!(pool.digest(), pool_for(&d, 1).digest());
    assert_ne!(pool.digest(), pool_for(&d, 2).digest());
}

#[test]
fn subsample_uses_round_half_up_counts() {
    let d = small_task();
    let pool = pool_for(&d, 1);
    for (r, want) in [(0.0, 0), (0.025, 1), (0.5, 10), (1.0, 20), (2.5, 50), (6.0, 120)] {
        let drawn = augment::subsample_pool(&pool, &d, r, 4).unwrap();
        assert_eq!(drawn.len(), want, "r={r}");
    }
}

#[test]
fn dare_is_deterministic_and_reduces_to_gold_only() {
    let d = small_task();
    let pool = pool_for(&d, 1);
    let backend = LinearBackend::default();
    let config = EnsembleConfig { n_members: 4, seed: 11, ..EnsembleConfig::dare() };
    let a = augment::train_dare(&d, &pool, &config, &backend).unwrap();
    let b = augment::train_dare(&d, &pool, &config, &backend).unwrap();
    assert_eq!(a.predict_all(&d.test), b.predict_all(&d.test));
    let infos: Vec<_> = a.members.iter().map(|m| m.info.clone()).collect();
    assert_eq!(infos, b.members.iter().map(|m| m.info.clone()).collect::<Vec<_>>());
    assert!(infos.iter().all(|i| i.synthetic_counts == BTreeMap::from([("induce".to_owned(), 20)])));

    let single = EnsembleConfig { n_members: 1, ratio: 0.0, ..config };
    let dare = augment::train_dare(&d, &pool, &single, &backend).unwrap();
    let gold = augment::train_gold_only(&d, &single, &backend).unwrap();
    assert_eq!(dare.predict_all(&d.test), gold.predict_all(&d.test));
}

#[test]
fn balanced_bagging_members_see_equal_label_counts() {
    let d = small_task();
    let config = EnsembleConfig { n_members: 3, seed: 2, ..EnsembleConfig::baseline() };
    let ens = augment::train_balanced_bagging(&d, &config, &LinearBackend::default()).unwrap();
    for m in &ens.members {
        assert_eq!(m.info.label_counts.values().copied().collect::<Vec<_>>(), vec![20, 20]);
    }
}

#[test]
fn ensemble_round_trips_through_disk() {
    let d = small_task();
    let config = EnsembleConfig { n_members: 2, seed: 2, ..EnsembleConfig::baseline() };
    let ens = augment::train_balanced_bagging(&d, &config, &LinearBackend::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ens.save(dir.path(), None).unwrap();
    let back = augment::Ensemble::load(dir.path()).unwrap();
    assert_eq!(back.predict_all(&d.test), ens.predict_all(&d.test));
}
