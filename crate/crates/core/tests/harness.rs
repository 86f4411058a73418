use spoofguide::detector::BankMember;
use spoofguide::harness::{run_benchmark, summary_table, write_reports, BenchmarkConfig, Scheme};

#[test]
fn smoke_benchmark_completes() {
    let cfg = BenchmarkConfig::smoke();
    let outcome = run_benchmark(&cfg).unwrap();
    assert!(outcome.all_hold(), "{:?}", outcome.checks);
    let run = &outcome.runs[0];
    assert_eq!(run.detectors.len(), BankMember::ALL.len());
    assert_eq!(run.decoders.len(), Scheme::ALL.len());
    for d in &run.decoders {
        assert_eq!(d.seq_len, cfg.seq_len);
        assert_eq!(d.bank_scores.len(), BankMember::ALL.len());
        assert!(d.bigram_kl >= 0.0);
    }

    let dir = tempfile::tempdir().unwrap();
    write_reports(&outcome, dir.path()).unwrap();
    for name in ["detectors.jsonl", "decoders.jsonl", "checks.jsonl", "timing.jsonl", "summary.txt"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let decoders = std::fs::read_to_string(dir.path().join("decoders.jsonl")).unwrap();
    assert_eq!(decoders.lines().count(), Scheme::ALL.len());
    assert!(summary_table(&outcome).contains("hier-eas"));
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let cfg = BenchmarkConfig {
        seeds: vec![],
        ..BenchmarkConfig::smoke()
    };
    assert!(run_benchmark(&cfg).is_err());
    let cfg = BenchmarkConfig {
        seq_len: 10,
        ..BenchmarkConfig::smoke()
    };
    assert!(run_benchmark(&cfg).is_err());
}
