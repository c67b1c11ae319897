//! Metric implementations checked against independent oracles.

use std::collections::BTreeMap;

use evalkit_core::canonical;
use evalkit_core::metrics::*;
use evalkit_core::tokenize::{tokenize_13a, tokenize_whitespace};
use evalkit_core::{Batch, ScoreValue};
use proptest::prelude::*;

/// tp, fp, fn, tn for one label.
type Cells = (u64, u64, u64, u64);

/// Brute-force scores: counts every (reference, prediction) pair by scanning
/// the rows once per label pair.
fn brute_force(pred: &[i64], refs: &[i64]) -> (f64, BTreeMap<i64, Cells>) {
    let mut labels: Vec<i64> = pred.iter().chain(refs).copied().collect();
    labels.sort();
    labels.dedup();
    let count = |r: i64, p: i64| -> u64 {
        (0..pred.len()).filter(|&i| refs[i] == r && pred[i] == p).count() as u64
    };
    let mut per_class = BTreeMap::new();
    for &k in &labels {
        let tp = count(k, k);
        let fp: u64 = labels.iter().filter(|&&r| r != k).map(|&r| count(r, k)).sum();
        let fn_: u64 = labels.iter().filter(|&&p| p != k).map(|&p| count(k, p)).sum();
        let tn = pred.len() as u64 - tp - fp - fn_;
        per_class.insert(k, (tp, fp, fn_, tn));
    }
    let correct: u64 = labels.iter().map(|&k| count(k, k)).sum();
    (correct as f64 / pred.len() as f64, per_class)
}

fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn oracle_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    (
        div(tp as f64, (tp + fp) as f64),
        div(tp as f64, (tp + fn_) as f64),
        div(2.0 * tp as f64, (2 * tp + fp + fn_) as f64),
    )
}

fn check_against_oracle(pred: &[i64], refs: &[i64]) {
    let (acc, classes) = brute_force(pred, refs);
    assert_eq!(accuracy(pred, refs).unwrap(), acc);

    // Binary for every label present.
    for (&k, &(tp, fp, fn_, _)) in &classes {
        let s = precision_recall_f1(pred, refs, &Averaging::Binary { pos_label: k }).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), oracle_prf(tp, fp, fn_));
    }

    // Macro / weighted, summing in ascending label order.
    let (mut mp, mut mr, mut mf) = (0.0, 0.0, 0.0);
    let (mut wp, mut wr, mut wf, mut ws) = (0.0, 0.0, 0.0, 0.0);
    let (mut stp, mut sfp, mut sfn) = (0, 0, 0);
    for &(tp, fp, fn_, _) in classes.values() {
        let (p, r, f) = oracle_prf(tp, fp, fn_);
        mp += p;
        mr += r;
        mf += f;
        let w = (tp + fn_) as f64;
        wp += w * p;
        wr += w * r;
        wf += w * f;
        ws += w;
        stp += tp;
        sfp += fp;
        sfn += fn_;
    }
    let k = classes.len() as f64;
    let s = precision_recall_f1(pred, refs, &Averaging::Macro).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (mp / k, mr / k, mf / k));
    let s = precision_recall_f1(pred, refs, &Averaging::Weighted).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), (div(wp, ws), div(wr, ws), div(wf, ws)));
    let s = precision_recall_f1(pred, refs, &Averaging::Micro).unwrap();
    assert_eq!((s.precision, s.recall, s.f1), oracle_prf(stp, sfp, sfn));
}

fn labels(max_n: usize) -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (1..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(0i64..3, n), prop::collection::vec(0i64..3, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn classification_matches_brute_force((pred, refs) in labels(8)) {
        check_against_oracle(&pred, &refs);
    }

    #[test]
    fn relabeling_leaves_accuracy_and_macro_f1_unchanged(
        (pred, refs) in labels(8),
        perm in Just(vec![0i64, 1, 2]).prop_shuffle(),
        offset in -50i64..50,
    ) {
        let relabel = |v: &[i64]| v.iter().map(|&x| perm[x as usize] * 7 + offset).collect::<Vec<_>>();
        let (p2, r2) = (relabel(&pred), relabel(&refs));
        prop_assert_eq!(accuracy(&pred, &refs).unwrap(), accuracy(&p2, &r2).unwrap());
        let a = precision_recall_f1(&pred, &refs, &Averaging::Macro).unwrap();
        let b = precision_recall_f1(&p2, &r2, &Averaging::Macro).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn bleu_clipping_never_exceeds_reference_counts(
        cand in prop::collection::vec(0u8..5, 1..12),
        refs in prop::collection::vec(prop::collection::vec(0u8..5, 0..12), 1..4),
    ) {
        let to_tokens = |v: &[u8]| v.iter().map(|t| format!("w{t}")).collect::<Vec<String>>();
        let cand_t = to_tokens(&cand);
        let refs_t: Vec<Vec<String>> = refs.iter().map(|r| to_tokens(r)).collect();
        let s = corpus_bleu(std::slice::from_ref(&cand_t), std::slice::from_ref(&refs_t), 4, Smoothing::None).unwrap();

        // Naive oracle: for each distinct candidate type, min(candidate count, max count in any reference).
        let mut types = cand_t.clone();
        types.sort();
        types.dedup();
        let naive: usize = types
            .iter()
            .map(|t| {
                let c = cand_t.iter().filter(|x| *x == t).count();
                let m = refs_t.iter().map(|r| r.iter().filter(|x| *x == t).count()).max().unwrap();
                c.min(m)
            })
            .sum();
        prop_assert_eq!(s.matches[0], naive);
        prop_assert!((0.0..=1.0).contains(&s.bleu));
    }

    #[test]
    fn perfect_corpus_stays_perfect_when_extended(
        sents in prop::collection::vec(prop::collection::vec(0u8..6, 4..10), 1..5),
        extra in prop::collection::vec(0u8..6, 4..10),
    ) {
        let to_tokens = |v: &[u8]| v.iter().map(|t| format!("w{t}")).collect::<Vec<String>>();
        let mut cands: Vec<Vec<String>> = sents.iter().map(|s| to_tokens(s)).collect();
        let mut refs: Vec<Vec<Vec<String>>> = cands.iter().map(|c| vec![c.clone()]).collect();
        prop_assert_eq!(corpus_bleu(&cands, &refs, 4, Smoothing::None).unwrap().bleu, 1.0);
        cands.push(to_tokens(&extra));
        refs.push(vec![to_tokens(&extra)]);
        prop_assert_eq!(corpus_bleu(&cands, &refs, 4, Smoothing::None).unwrap().bleu, 1.0);
    }

    #[test]
    fn constant_logprob_perplexity_is_exact(lp in -20.0f64..=0.0, len in 1usize..50) {
        let p = perplexity_from_logprobs(&[vec![lp; len]]).unwrap();
        prop_assert_eq!(p.perplexities[0], libm::exp(-lp));
    }

    #[test]
    fn canonical_metrics_ignore_row_order(
        (pred, refs) in labels(12),
        seed in any::<u64>(),
    ) {
        let n = pred.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by a simple LCG so the permutation is arbitrary.
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let batch = Batch::new().with("predictions", pred.clone()).with("references", refs.clone());
        let shuffled = batch.select(&order);
        for id in ["accuracy", "precision", "recall", "f1"] {
            let m = canonical::lookup(id).unwrap();
            let mut params = m.info().parameters;
            params.insert("average".into(), "macro".into());
            prop_assert_eq!(m.score(&batch, &params).unwrap(), m.score(&shuffled, &params).unwrap());
        }
    }
}

/// Exact `Σ_{i≤k} C(m, i)` in integers.
fn binomial_prefix_sum(m: u64, k: u64) -> u128 {
    let mut c: u128 = 1;
    let mut sum: u128 = 0;
    for i in 0..=k {
        if i > 0 {
            c = c * (m - i + 1) as u128 / i as u128;
        }
        sum += c;
    }
    sum
}

#[test]
fn mcnemar_matches_binomial_sum_exhaustively() {
    for m in 0..=20u64 {
        for n01 in 0..=m {
            let n10 = m - n01;
            let got = mcnemar_from_counts(n01, n10);
            let expected = if m == 0 {
                1.0
            } else {
                let s = binomial_prefix_sum(m, n01.min(n10));
                (2.0 * s as f64 / (1u128 << m) as f64).min(1.0)
            };
            assert!(
                (got.p_value - expected).abs() <= 1e-12,
                "m={m} n01={n01}: {} vs {expected}",
                got.p_value
            );
        }
    }
    assert_eq!(binomial_prefix_sum(10, 2), 56);
}

#[test]
fn bleu_agrees_with_sacrebleu() {
    // Reference values from sacrebleu 2.x, corpus_bleu(tokenize="13a", smooth_method="none"), divided by 100.
    let tok = |s: &str| tokenize_13a(s);
    let cands = vec![tok("The cat sat on the mat."), tok("It is raining today, isn't it?")];
    let refs = vec![
        vec![tok("The cat is sitting on the mat."), tok("A cat sat on the mat.")],
        vec![tok("It rains today, doesn't it?"), tok("Today it is raining.")],
    ];
    let s = corpus_bleu(&cands, &refs, 4, Smoothing::None).unwrap();
    assert!((s.bleu - 0.5290180572651341).abs() < 1e-12);
    let expected_p = [0.9333333333333332, 0.6923076923076923, 0.36363636363636365, 0.33333333333333337];
    for (p, e) in s.precisions.iter().zip(expected_p) {
        assert!((p - e).abs() < 1e-12);
    }
    assert_eq!((s.translation_length, s.reference_length), (15, 14));
    assert_eq!(s.brevity_penalty, 1.0);

    let cands = vec![tok("Hello, world! 3.14 is pi."), tok("short")];
    let refs = vec![vec![tok("Hello world! Pi is 3.14.")], vec![tok("a much longer reference sentence")]];
    let s = corpus_bleu(&cands, &refs, 4, Smoothing::None).unwrap();
    assert_eq!(s.bleu, 0.0);
    assert!((s.brevity_penalty - 0.7165313105737893).abs() < 1e-12);
    assert_eq!((s.translation_length, s.reference_length), (9, 12));
}

#[test]
fn bleu_module_on_raw_text() {
    let m = canonical::lookup("bleu").unwrap();
    let batch = Batch::new()
        .with("predictions", vec!["the quick brown fox"])
        .with("references", vec![vec!["the quick brown fox".to_string()]]);
    let s = m.score(&batch, &m.info().parameters).unwrap();
    assert_eq!(s["bleu"], ScoreValue::Scalar(1.0));
    assert_eq!(s["precisions"], ScoreValue::Array(vec![1.0; 4]));
    let mut p = m.info().parameters;
    p.insert("tokenize".into(), "none".into());
    assert_eq!(m.score(&batch, &p).unwrap()["bleu"], ScoreValue::Scalar(1.0));
    assert_eq!(tokenize_whitespace("the quick brown fox").len(), 4);
}
