use proptest::prelude::*;
use spoofguide::harness::LoopProneModel;
use spoofguide::rng;
use spoofguide::sampling::{
    eas_generate, filter_top_k, nucleus_filter, windowed_penalty_generate, EasParams, RasParams,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eas_resumes_where_it_stopped(seed in any::<u64>(), split in 0usize..40, extra in 0usize..40) {
        let model = LoopProneModel::default();
        let p = EasParams::default();
        let (whole, whole_state) = eas_generate(&model, &[], split + extra, &p, &mut rng::seeded(seed), None).unwrap();
        let mut r = rng::seeded(seed);
        let (head, state) = eas_generate(&model, &[], split, &p, &mut r, None).unwrap();
        let (tail, end_state) = eas_generate(&model, &head, extra, &p, &mut r, Some(state)).unwrap();
        prop_assert_eq!(&whole[..split], &head[..]);
        prop_assert_eq!(&whole[split..], &tail[..]);
        prop_assert_eq!(whole_state, end_state);
    }

    #[test]
    fn memory_stays_bounded(seed in any::<u64>(), k in 1usize..6, w in 1usize..20, n in 1usize..200) {
        let p = EasParams { cluster_k: k, window: w, ..EasParams::default() };
        let (_, state) = eas_generate(&LoopProneModel::default(), &[], n, &p, &mut rng::seeded(seed), None).unwrap();
        prop_assert!(state.len() <= (k + 1) * (w + 1));
        prop_assert!(state.entries.iter().all(|e| e.age <= w && e.rank >= 1 && e.rank <= k + 1));
    }

    #[test]
    fn filters_keep_distributions_normalized(
        raw in prop::collection::vec(0.0f64..1.0, 1..40),
        k in 1usize..50,
        top_p in 0.05f64..1.0,
    ) {
        prop_assume!(raw.iter().any(|&x| x > 1e-6));
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let kept = filter_top_k(&probs, k);
        prop_assert!(kept.iter().filter(|&&x| x > 0.0).count() <= k);
        prop_assert!((kept.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let nucleus = nucleus_filter(&probs, top_p).unwrap();
        prop_assert!((nucleus.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // Every kept token is at least as likely as every dropped one.
        let min_kept = probs.iter().zip(&nucleus).filter(|(_, &n)| n > 0.0).map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
        let max_dropped = probs.iter().zip(&nucleus).filter(|(_, &n)| n == 0.0).map(|(p, _)| *p).fold(0.0, f64::max);
        prop_assert!(min_kept >= max_dropped);
    }
}

#[test]
fn generators_are_seeded() {
    let model = LoopProneModel::default();
    let ras = RasParams::default();
    let a = windowed_penalty_generate(&model, &[], 80, &ras, &mut rng::seeded(5)).unwrap();
    let b = windowed_penalty_generate(&model, &[], 80, &ras, &mut rng::seeded(5)).unwrap();
    let c = windowed_penalty_generate(&model, &[], 80, &ras, &mut rng::seeded(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
