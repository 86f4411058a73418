use std::sync::OnceLock;

use rand::Rng;
use spoofguide::armodel::NGramModel;
use spoofguide::detector::{train_bank, ConstantDetector, CropMode, DetectorBank, FeatureLogisticDetector};
use spoofguide::harness::{synthesize_data, BenchmarkConfig};
use spoofguide::hierdecode::{hier_generate, HierParams};
use spoofguide::rng;
use spoofguide::sampling::eas_generate;

struct Fixture {
    model: NGramModel,
    bank: DetectorBank<FeatureLogisticDetector>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = BenchmarkConfig::smoke();
        let data = synthesize_data(&cfg, 3).unwrap();
        let (bank, _) = train_bank(&data.real_train, &data.fake_train, CropMode::Hop(cfg.crop_hop), &cfg.train).unwrap();
        Fixture { model: data.model, bank }
    })
}

fn constant_bank() -> DetectorBank<ConstantDetector> {
    DetectorBank::from_fn(|m| ConstantDetector { spec: m.spec(), value: 0.5 })
}

#[test]
fn single_beam_replays_eas_on_round_streams() {
    let f = fixture();
    let params = HierParams {
        beams: [1, 1, 1],
        max_len: 145,
        ..HierParams::default()
    };
    let prefix = [1, 2, 3];
    let out = hier_generate(&f.model, &constant_bank(), &prefix, &params, &mut rng::seeded(21)).unwrap();

    let mut r = rng::seeded(21);
    let (mut tokens, mut state) = eas_generate(&f.model, &prefix, params.warmup_len, &params.eas, &mut r, None).unwrap();
    while tokens.len() < params.max_len {
        let round_seed: u64 = r.gen();
        let n = params.stage_lens[2].min(params.max_len - tokens.len());
        let context: Vec<u32> = prefix.iter().chain(&tokens).copied().collect();
        let (chunk, next) = eas_generate(&f.model, &context, n, &params.eas, &mut rng::stream(round_seed, 0), Some(state)).unwrap();
        tokens.extend(chunk);
        state = next;
    }
    assert_eq!(out.tokens, tokens);
    assert_eq!(out.final_state, state);
    assert_eq!(out.logs.len(), 3);
}

#[test]
fn warmup_only_when_max_len_equals_warmup() {
    let f = fixture();
    let params = HierParams { max_len: 20, ..HierParams::default() };
    let out = hier_generate(&f.model, &f.bank, &[], &params, &mut rng::seeded(1)).unwrap();
    assert_eq!(out.tokens.len(), 20);
    assert!(out.logs.is_empty());
}

#[test]
fn partial_rounds_give_exact_length() {
    let f = fixture();
    for max_len in [21, 29, 30, 44, 45, 69, 70, 71, 95, 119, 121] {
        let params = HierParams { max_len, ..HierParams::default() };
        let out = hier_generate(&f.model, &f.bank, &[], &params, &mut rng::seeded(max_len as u64)).unwrap();
        assert_eq!(out.tokens.len(), max_len);
        let appended: usize = out.logs.iter().map(|l| l.appended).sum();
        assert_eq!(appended + params.warmup_len, max_len);
        let last = out.logs.last().unwrap();
        let tail = (max_len - params.warmup_len) % 50;
        if tail != 0 {
            assert_eq!(last.appended, tail);
            assert_eq!(last.stage1.pass_through, tail < 10, "max_len {max_len}");
        }
    }
}

#[test]
fn winner_survives_every_cut() {
    let f = fixture();
    let params = HierParams { max_len: 220, ..HierParams::default() };
    let [_, b1, b2] = params.beams;
    for seed in 0..6 {
        let out = hier_generate(&f.model, &f.bank, &[], &params, &mut rng::seeded(seed)).unwrap();
        for log in &out.logs {
            assert_eq!(log.trajectory(), params.beams);
            let mut stage1 = log.stage1.scores.clone();
            stage1.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top: Vec<usize> = stage1.iter().take(b1).map(|&(id, _)| id).collect();
            assert_eq!(log.stage1.kept, top);
            assert!(log.stage1.kept.contains(&log.chosen));
            assert_eq!(log.stage2.kept.len(), b2);
            assert!(log.stage2.kept.contains(&log.chosen));
            let w = log.chosen_stage1_score().unwrap();
            let below = stage1.iter().filter(|&&(_, s)| s > w).count();
            assert!(below < b1);
        }
    }
}

#[test]
fn output_ignores_thread_count() {
    let f = fixture();
    let params = HierParams { max_len: 170, ..HierParams::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| hier_generate(&f.model, &f.bank, &[], &params, &mut rng::seeded(77)).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.tokens, b.tokens);
    assert_eq!(a.logs, b.logs);
}

#[test]
fn bank_mismatch_is_rejected() {
    let f = fixture();
    let params = HierParams {
        stage_lens: [10, 20, 50],
        ..HierParams::default()
    };
    assert!(hier_generate(&f.model, &f.bank, &[], &params, &mut rng::seeded(0)).is_err());
}
