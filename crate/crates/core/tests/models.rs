use proptest::prelude::*;
use spoofguide::armodel::{HmmSource, NGramModel, NextTokenModel};
use spoofguide::detector::{
    bce_train, build_training_set, evaluate_detector, BankMember, CropMode, SegmentDetector, TrainConfig,
};
use spoofguide::rng;
use spoofguide::token::TokenSequence;

fn stationary(transition: &[Vec<f64>]) -> Vec<f64> {
    let n = transition.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for (i, row) in transition.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        pi = next;
    }
    pi
}

#[test]
fn hmm_token_frequencies_match_stationary_emission() {
    let hmm = HmmSource::banded(6, 24, 0.8, 5, 11).unwrap();
    let pi = stationary(&hmm.transition);
    let mut expected = vec![0.0; 24];
    for (s, row) in hmm.emission.iter().enumerate() {
        for (t, &e) in row.iter().enumerate() {
            expected[t] += pi[s] * e;
        }
    }
    let mut counts = [0usize; 24];
    let mut total = 0;
    for i in 0..40 {
        let seq = hmm.sample(3000, &mut rng::stream(19, i));
        for &t in &seq.tokens()[200..] {
            counts[t as usize] += 1;
            total += 1;
        }
    }
    let tv: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&c, &e)| (c as f64 / total as f64 - e).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ngram_dist_is_normalized(
        corpus in prop::collection::vec(prop::collection::vec(0u32..8, 0..30), 0..8),
        prefix in prop::collection::vec(0u32..8, 0..6),
        order in 1usize..4,
        lambda in 0.01f64..5.0,
    ) {
        let seqs: Vec<TokenSequence> = corpus.into_iter().map(|t| TokenSequence::new(8, t).unwrap()).collect();
        let model = NGramModel::train(&seqs, 8, order, lambda).unwrap();
        let d = model.dist(&prefix);
        prop_assert_eq!(d.len(), 8);
        prop_assert!(d.iter().all(|&p| p > 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn detector_learns_a_separable_split() {
    // Real: slow ramps. Fake: uniform noise.
    let real: Vec<TokenSequence> = (0..40)
        .map(|i| TokenSequence::new(16, (0..120u32).map(|t| (t / 4 + i) % 16).collect()).unwrap())
        .collect();
    let fake: Vec<TokenSequence> = (0..40)
        .map(|i| {
            use rand::Rng;
            let mut r = rng::stream(4, i);
            TokenSequence::new(16, (0..120).map(|_| r.gen_range(0..16)).collect()).unwrap()
        })
        .collect();
    let (train_real, held_real) = real.split_at(30);
    let (train_fake, held_fake) = fake.split_at(30);
    for m in [BankMember::M10, BankMember::M50From10] {
        let set = build_training_set(train_real, train_fake, m.spec(), CropMode::Hop(10), 1).unwrap();
        let (det, report) = bce_train(&set.examples, m.spec(), &TrainConfig::default()).unwrap();
        assert!(report.final_loss < 0.3, "{m}: loss {}", report.final_loss);
        assert_eq!(det.spec(), m.spec());
        let eval = evaluate_detector(m, &det, held_real, held_fake).unwrap();
        assert!(eval.auroc > 0.95, "{m}: auroc {}", eval.auroc);
    }
}
