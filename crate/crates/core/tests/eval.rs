use dare_core::corpus::RelationSchema;
use dare_core::eval::{self, MeanStd};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::statistics::Statistics;

fn schema() -> RelationSchema {
    RelationSchema::with_types(["r0", "r1", "r2", "r3"]).unwrap()
}

/// Brute-force micro counts and per-class support.
fn tally(pred: &[usize], gold: &[usize], null: usize) -> (usize, usize, usize) {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p != null && p == g).count();
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p != null && p != g).count();
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| **g != null && p != g).count();
    (tp, fp, fn_)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[test]
fn metrics_match_brute_force_on_random_pairs() {
    let s = schema();
    let null = s.null_index();
    let mut rng = dare_core::seed::rng(17);
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let r = eval::evaluate_indices(&pred, &gold, &s).unwrap();
        let (tp, fp, fn_) = tally(&pred, &gold, null);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (tp, fp, fn_));
        let p = ratio(tp, tp + fp);
        let rc = ratio(tp, tp + fn_);
        let f1 = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
        assert!((r.micro_f1 - f1).abs() < 1e-12);
        for k in 0..null {
            let support = gold.iter().filter(|&&g| g == k).count();
            let scores = &r.per_class[s.label_name(k)];
            assert_eq!(scores.support, support);
            assert_eq!(scores.f1.is_none(), support == 0);
        }
        let confusion_total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(confusion_total, n);
    }
}

#[test]
fn mcnemar_agrees_with_exact_binomial_test() {
    // Pairs far enough from the boundary that the chi-square approximation
    // and the exact two-sided binomial test reach the same decision.
    for (b, c) in [(10, 2), (2, 10), (5, 5), (20, 5), (3, 4), (0, 9), (15, 14), (30, 12)] {
        let m = eval::mcnemar_from_counts(b, c);
        let n = (b + c) as u64;
        let exact = (2.0 * Binomial::new(0.5, n).unwrap().cdf(b.min(c) as u64)).min(1.0);
        assert_eq!(m.significant_at_05, exact < 0.05, "b={b} c={c}: chi2 {} exact {exact}", m.statistic);
    }
    let m = eval::mcnemar_from_counts(10, 2);
    assert!((m.statistic - 49.0 / 12.0).abs() < 1e-12);
}

#[test]
fn aggregate_matches_sample_statistics() {
    let values = [0.41, 0.47, 0.39, 0.52, 0.44];
    let m = MeanStd::of(&values).unwrap();
    assert!((m.mean - values.mean()).abs() < 1e-12);
    assert!((m.std - values.std_dev()).abs() < 1e-12);
    let one = MeanStd::of(&[0.3]).unwrap();
    assert_eq!((one.mean, one.std), (0.3, 0.0));
}

fn labels(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..5, 0usize..5), n)
}

proptest! {
    #[test]
    fn evaluation_is_permutation_invariant(pairs in labels(30), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let s = schema();
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut dare_core::seed::rng(seed));
        let (pred2, gold2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
        prop_assert_eq!(eval::evaluate_indices(&pred, &gold, &s).unwrap(), eval::evaluate_indices(&pred2, &gold2, &s).unwrap());
    }

    #[test]
    fn null_null_pairs_do_not_move_micro_scores(pairs in labels(20), extra in 1usize..20) {
        let s = schema();
        let null = s.null_index();
        let (mut pred, mut gold): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let before = eval::evaluate_indices(&pred, &gold, &s).unwrap();
        pred.extend(std::iter::repeat_n(null, extra));
        gold.extend(std::iter::repeat_n(null, extra));
        let after = eval::evaluate_indices(&pred, &gold, &s).unwrap();
        prop_assert_eq!(before.micro_precision, after.micro_precision);
        prop_assert_eq!(before.micro_recall, after.micro_recall);
        prop_assert_eq!(before.micro_f1, after.micro_f1);
    }

    #[test]
    fn mcnemar_is_symmetric(
        rows in prop::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..60),
    ) {
        let names = ["r0", "r1", "null"];
        let a: Vec<&str> = rows.iter().map(|r| names[r.0]).collect();
        let b: Vec<&str> = rows.iter().map(|r| names[r.1]).collect();
        let g: Vec<&str> = rows.iter().map(|r| names[r.2]).collect();
        let ab = eval::mcnemar(&a, &b, &g).unwrap();
        let ba = eval::mcnemar(&b, &a, &g).unwrap();
        prop_assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.significant_at_05, ba.significant_at_05);
    }
}
