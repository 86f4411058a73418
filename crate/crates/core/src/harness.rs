//! Synthetic end-to-end benchmark.
//!
//! A sticky hidden Markov source stands in for natural token streams. An
//! n-gram model trained on it stands in for the autoregressive generator,
//! and its samples are the "fake" class for the detector bank. Decoders are
//! then compared on token-space proxies: bigram divergence from held-out
//! real data and repetition statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armodel::{HmmSource, NGramModel, NextTokenModel};
use crate::detector::{
    evaluate_detector, train_bank, BankMember, ConstantDetector, CropMode, DetectorBank, DetectorEval, SegmentDetector, TrainConfig,
};
use crate::error::{Error, Result};
use crate::hierdecode::{hier_generate_with, HierParams, RoundLog};
use crate::rng;
use crate::sampling::{EasSampler, RasParams, RasSampler, StepSampler, TopKSampler};
use crate::token::{segments_for_spec, TokenId, TokenSequence};

/// Decoding schemes compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain top-k sampling.
    Original,
    /// Windowed repetition penalty (RAS-style stand-in).
    Ras,
    Eas,
    HierRas,
    HierEas,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Original, Scheme::Ras, Scheme::Eas, Scheme::HierRas, Scheme::HierEas];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Original => "original",
            Scheme::Ras => "ras",
            Scheme::Eas => "eas",
            Scheme::HierRas => "hier-ras",
            Scheme::HierEas => "hier-eas",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Scheme::HierRas | Scheme::HierEas)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme {s:?}; expected one of original, ras, eas, hier-ras, hier-eas")))
    }
}

/// Sampler settings shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    /// Top-k of the original scheme.
    pub top_k: usize,
    pub temperature: f64,
    pub ras: RasParams,
    /// Hierarchical search and its EAS parameters (also used by `eas`).
    /// `max_len` is replaced by the requested sequence length.
    pub hier: HierParams,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        Self {
            top_k: 50,
            temperature: 1.0,
            ras: RasParams::default(),
            hier: HierParams::default(),
        }
    }
}

impl DecoderSettings {
    pub fn validate(&self) -> Result<()> {
        TopKSampler {
            top_k: self.top_k,
            temperature: self.temperature,
            top_p: 1.0,
        }
        .validate()?;
        self.ras.validate()?;
        self.hier.validate()
    }
}

/// Generates `n` sequences of exactly `len` tokens. Sequence `i` uses
/// stream `(seed, i)`, so the result does not depend on thread count.
pub fn decode_corpus<M, D>(
    model: &M,
    bank: Option<&DetectorBank<D>>,
    scheme: Scheme,
    settings: &DecoderSettings,
    n: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>>
where
    M: NextTokenModel + ?Sized,
    D: SegmentDetector,
{
    decode_corpus_logged(model, bank, scheme, settings, n, len, seed).map(|(seqs, _)| seqs)
}

/// Like [`decode_corpus`], also returning the round logs of each sequence
/// (empty for non-hierarchical schemes).
pub fn decode_corpus_logged<M, D>(
    model: &M,
    bank: Option<&DetectorBank<D>>,
    scheme: Scheme,
    settings: &DecoderSettings,
    n: usize,
    len: usize,
    seed: u64,
) -> Result<(Vec<TokenSequence>, Vec<Vec<RoundLog>>)>
where
    M: NextTokenModel + ?Sized,
    D: SegmentDetector,
{
    settings.validate()?;
    let unlogged = |seqs: Vec<TokenSequence>| {
        let logs = vec![Vec::new(); seqs.len()];
        (seqs, logs)
    };
    match (scheme, bank) {
        (Scheme::HierRas | Scheme::HierEas, None) => Err(Error::invalid(format!(
            "scheme {scheme} needs a detector bank"
        ))),
        (Scheme::Original | Scheme::Ras | Scheme::Eas, Some(_)) => Err(Error::invalid(format!(
            "scheme {scheme} does not use a detector bank"
        ))),
        (Scheme::Original, None) => {
            let s = TopKSampler {
                top_k: settings.top_k,
                temperature: settings.temperature,
                top_p: 1.0,
            };
            run_flat(model, &s, n, len, seed).map(unlogged)
        }
        (Scheme::Ras, None) => run_flat(model, &RasSampler(settings.ras), n, len, seed).map(unlogged),
        (Scheme::Eas, None) => run_flat(model, &EasSampler(settings.hier.eas), n, len, seed).map(unlogged),
        (Scheme::HierRas, Some(bank)) => run_hier(model, bank, &RasSampler(settings.ras), settings, n, len, seed),
        (Scheme::HierEas, Some(bank)) => {
            run_hier(model, bank, &EasSampler(settings.hier.eas), settings, n, len, seed)
        }
    }
}

fn run_flat<M, S>(model: &M, sampler: &S, n: usize, len: usize, seed: u64) -> Result<Vec<TokenSequence>>
where
    M: NextTokenModel + ?Sized,
    S: StepSampler,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut state = sampler.fresh_state();
            let mut context = Vec::with_capacity(len);
            let tokens = sampler.extend(model, &mut context, len, &mut state, &mut rng::stream(seed, i as u64))?;
            TokenSequence::new(model.vocab_size(), tokens)
        })
        .collect()
}

fn run_hier<M, D, S>(
    model: &M,
    bank: &DetectorBank<D>,
    sampler: &S,
    settings: &DecoderSettings,
    n: usize,
    len: usize,
    seed: u64,
) -> Result<(Vec<TokenSequence>, Vec<Vec<RoundLog>>)>
where
    M: NextTokenModel + ?Sized,
    D: SegmentDetector,
    S: StepSampler,
{
    let params = HierParams {
        max_len: len,
        ..settings.hier
    };
    let outs: Vec<(TokenSequence, Vec<RoundLog>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let out = hier_generate_with(model, bank, &[], &params, sampler, &mut rng::stream(seed, i as u64))?;
            Ok((TokenSequence::new(model.vocab_size(), out.tokens)?, out.logs))
        })
        .collect::<Result<_>>()?;
    Ok(outs.into_iter().unzip())
}

/// A two-state hold/jump source. With probability `hold` the previous
/// token repeats; otherwise the next token is uniform over `jump_width`
/// consecutive ids starting at a position-dependent offset. The first
/// token is a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopProneModel {
    pub vocab_size: usize,
    pub hold: f64,
    pub jump_width: usize,
    pub structure_seed: u64,
}

impl Default for LoopProneModel {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            hold: 0.5,
            jump_width: 3,
            structure_seed: 17,
        }
    }
}

impl NextTokenModel for LoopProneModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        let v = self.vocab_size;
        let mut d = vec![0.0; v];
        let start = (rng::derive(self.structure_seed, prefix.len() as u64) % v as u64) as usize;
        let jump = if prefix.is_empty() { 1.0 } else { 1.0 - self.hold };
        for i in 0..self.jump_width {
            d[(start + i) % v] += jump / self.jump_width as f64;
        }
        if let Some(&last) = prefix.last() {
            d[last as usize] += self.hold;
        }
        d
    }
}

/// `KL(reference || candidate)` in nats between joint bigram distributions,
/// each smoothed by adding `epsilon` to every one of the `V^2` cell counts.
/// Bigrams never cross sequence boundaries.
pub fn bigram_kl(
    candidate: &[TokenSequence],
    reference: &[TokenSequence],
    vocab_size: usize,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("bigram smoothing epsilon must be positive"));
    }
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::invalid("bigram divergence needs non-empty corpora"));
    }
    let counts = |corpus: &[TokenSequence]| -> Result<Vec<f64>> {
        let mut c = vec![0.0; vocab_size * vocab_size];
        for s in corpus {
            for w in s.tokens().windows(2) {
                let (a, b) = (w[0] as usize, w[1] as usize);
                if a >= vocab_size || b >= vocab_size {
                    return Err(Error::invalid(format!("token outside vocabulary of {vocab_size}")));
                }
                c[a * vocab_size + b] += 1.0;
            }
        }
        Ok(c)
    };
    let (p, q) = (counts(reference)?, counts(candidate)?);
    let cells = (vocab_size * vocab_size) as f64;
    let zp = p.iter().sum::<f64>() + epsilon * cells;
    let zq = q.iter().sum::<f64>() + epsilon * cells;
    let kl = p
        .iter()
        .zip(&q)
        .map(|(&pc, &qc)| {
            let (pp, qq) = ((pc + epsilon) / zp, (qc + epsilon) / zq);
            pp * (pp / qq).ln()
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStats {
    pub max_run: usize,
    pub mean_run: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
}

/// Run lengths of maximal constant stretches and distinct-n ratios. A
/// single token has `distinct_2 = 0` (no bigrams).
pub fn repetition_stats(seq: &[TokenId]) -> Result<RepetitionStats> {
    if seq.is_empty() {
        return Err(Error::invalid("repetition statistics need a non-empty sequence"));
    }
    let mut runs = Vec::new();
    let mut run = 1;
    for w in seq.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            runs.push(run);
            run = 1;
        }
    }
    runs.push(run);
    let unigrams: HashSet<TokenId> = seq.iter().copied().collect();
    let bigrams: HashSet<(TokenId, TokenId)> = seq.windows(2).map(|w| (w[0], w[1])).collect();
    let n_bigrams = seq.len() - 1;
    Ok(RepetitionStats {
        max_run: *runs.iter().max().expect("at least one run"),
        mean_run: seq.len() as f64 / runs.len() as f64,
        distinct_1: unigrams.len() as f64 / seq.len() as f64,
        distinct_2: if n_bigrams == 0 {
            0.0
        } else {
            bigrams.len() as f64 / n_bigrams as f64
        },
    })
}

/// Parameters of the banded hidden Markov source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub states: usize,
    pub stay: f64,
    pub band: usize,
    pub structure_seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            states: 8,
            stay: 0.85,
            band: 6,
            structure_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub vocab_size: usize,
    pub source: SourceConfig,
    /// Number of real sequences, before the held-out split.
    pub n_real: usize,
    pub seq_len: usize,
    pub fakes_per_real: usize,
    /// Share of real sequences held out for evaluation.
    pub holdout_fraction: f64,
    pub ar_order: usize,
    pub ar_lambda: f64,
    /// Offset between consecutive training windows.
    pub crop_hop: usize,
    pub train: TrainConfig,
    pub decoding: DecoderSettings,
    pub decoders: Vec<Scheme>,
    /// Sequences generated per decoder; 0 means one per held-out real
    /// sequence.
    pub n_decode: usize,
    pub kl_epsilon: f64,
    pub seeds: Vec<u64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            source: SourceConfig::default(),
            n_real: 300,
            seq_len: 220,
            fakes_per_real: 3,
            holdout_fraction: 0.25,
            ar_order: 2,
            ar_lambda: 20.0,
            crop_hop: 10,
            train: TrainConfig::default(),
            decoding: DecoderSettings::default(),
            decoders: Scheme::ALL.to_vec(),
            n_decode: 0,
            kl_epsilon: 0.5,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl BenchmarkConfig {
    /// A small configuration for quick end-to-end checks.
    pub fn smoke() -> Self {
        Self {
            vocab_size: 16,
            source: SourceConfig {
                states: 4,
                band: 4,
                ..SourceConfig::default()
            },
            n_real: 200,
            seq_len: 120,
            seeds: vec![1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2"));
        }
        if self.fakes_per_real == 0 {
            return Err(Error::invalid("fakes_per_real must be positive"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must lie in (0, 1)"));
        }
        let (train, held) = self.split_sizes();
        if train == 0 || held == 0 {
            return Err(Error::invalid(format!(
                "{} real sequences leave an empty train or held-out split",
                self.n_real
            )));
        }
        if self.seq_len < self.decoding.hier.warmup_len {
            return Err(Error::invalid(format!(
                "seq_len {} is shorter than the warmup length {}",
                self.seq_len, self.decoding.hier.warmup_len
            )));
        }
        if self.crop_hop == 0 {
            return Err(Error::invalid("crop_hop must be positive"));
        }
        if !(self.kl_epsilon > 0.0) {
            return Err(Error::invalid("kl_epsilon must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.decoders.is_empty() {
            return Err(Error::invalid("at least one decoder is required"));
        }
        self.train.validate()?;
        self.decoding.validate()
    }

    fn split_sizes(&self) -> (usize, usize) {
        let held = ((self.n_real as f64) * self.holdout_fraction).round() as usize;
        (self.n_real.saturating_sub(held), held)
    }

    pub fn source(&self) -> Result<HmmSource> {
        let s = &self.source;
        HmmSource::banded(s.states, self.vocab_size, s.stay, s.band, s.structure_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub seed: u64,
    pub decoder: Scheme,
    pub n_sequences: usize,
    pub seq_len: usize,
    /// Bigram divergence from the held-out real corpus, in nats.
    pub bigram_kl: f64,
    pub mean_max_run: f64,
    pub mean_run: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    /// Mean score of each bank member over non-overlapping windows.
    pub bank_scores: BTreeMap<BankMember, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRow {
    pub seed: u64,
    #[serde(flatten)]
    pub eval: DetectorEval,
}

/// Wall-clock cost of one decoder run. Kept apart from the reports, which
/// must be reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub seed: u64,
    pub decoder: Scheme,
    pub seconds_per_token: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub detectors: Vec<DetectorRow>,
    pub decoders: Vec<DecoderReport>,
    pub timings: Vec<TimingRecord>,
}

impl SeedRun {
    pub fn auroc(&self, member: BankMember) -> Option<f64> {
        self.detectors.iter().find(|r| r.eval.member == member).map(|r| r.eval.auroc)
    }

    pub fn decoder(&self, scheme: Scheme) -> Option<&DecoderReport> {
        self.decoders.iter().find(|r| r.decoder == scheme)
    }
}

/// Real and generated corpora for one seed, plus the generator.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub real_train: Vec<TokenSequence>,
    pub real_held: Vec<TokenSequence>,
    pub fake_train: Vec<TokenSequence>,
    pub fake_held: Vec<TokenSequence>,
    pub model: NGramModel,
}

/// Samples the real corpus, splits off the held-out part, fits the n-gram
/// generator on the training part and samples `fakes_per_real` top-k
/// sequences per real sequence on each side of the split.
pub fn synthesize_data(cfg: &BenchmarkConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let source = cfg.source()?;
    let (n_train, n_held) = cfg.split_sizes();

    let real_root = rng::derive(seed, 1);
    let mut real_train: Vec<TokenSequence> = (0..cfg.n_real)
        .into_par_iter()
        .map(|i| source.sample(cfg.seq_len, &mut rng::stream(real_root, i as u64)))
        .collect();
    let real_held = real_train.split_off(n_train);

    let model = NGramModel::train(&real_train, cfg.vocab_size, cfg.ar_order, cfg.ar_lambda)?;
    let no_bank: Option<&DetectorBank<ConstantDetector>> = None;
    let fakes = |count: usize, label: u64| {
        decode_corpus(&model, no_bank, Scheme::Original, &cfg.decoding, count, cfg.seq_len, rng::derive(seed, label))
    };
    let fake_train = fakes(n_train * cfg.fakes_per_real, 2)?;
    let fake_held = fakes(n_held * cfg.fakes_per_real, 3)?;
    Ok(SyntheticData {
        real_train,
        real_held,
        fake_train,
        fake_held,
        model,
    })
}

/// One seed of the benchmark: data synthesis, generator and detector
/// training, detector evaluation and decoder comparison.
pub fn synth_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<SeedRun> {
    let SyntheticData {
        real_train,
        real_held,
        fake_train,
        fake_held,
        model,
    } = synthesize_data(cfg, seed)?;
    let (real_train, real_held) = (&real_train[..], &real_held[..]);
    let no_bank: Option<&DetectorBank<ConstantDetector>> = None;
    let train_cfg = TrainConfig {
        seed: rng::derive(seed, 4),
        ..cfg.train
    };
    let (bank, _) = train_bank(real_train, &fake_train, CropMode::Hop(cfg.crop_hop), &train_cfg)?;

    let detectors = BankMember::ALL
        .iter()
        .map(|&m| {
            Ok(DetectorRow {
                seed,
                eval: evaluate_detector(m, bank.get(m), real_held, &fake_held)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_decode = if cfg.n_decode == 0 { real_held.len() } else { cfg.n_decode };
    let mut decoders = Vec::new();
    let mut timings = Vec::new();
    for &scheme in &cfg.decoders {
        let stream_root = rng::derive(seed, 10 + scheme as u64);
        let start = Instant::now();
        let corpus = if scheme.is_hierarchical() {
            decode_corpus(&model, Some(&bank), scheme, &cfg.decoding, n_decode, cfg.seq_len, stream_root)?
        } else {
            decode_corpus(&model, no_bank, scheme, &cfg.decoding, n_decode, cfg.seq_len, stream_root)?
        };
        let elapsed = start.elapsed().as_secs_f64();
        timings.push(TimingRecord {
            seed,
            decoder: scheme,
            seconds_per_token: elapsed / (n_decode * cfg.seq_len).max(1) as f64,
        });
        decoders.push(decoder_report(seed, scheme, &corpus, real_held, &bank, cfg)?);
    }
    Ok(SeedRun {
        seed,
        detectors,
        decoders,
        timings,
    })
}

fn decoder_report<D: SegmentDetector>(
    seed: u64,
    scheme: Scheme,
    corpus: &[TokenSequence],
    reference: &[TokenSequence],
    bank: &DetectorBank<D>,
    cfg: &BenchmarkConfig,
) -> Result<DecoderReport> {
    let stats = corpus
        .iter()
        .map(|s| repetition_stats(s.tokens()))
        .collect::<Result<Vec<_>>>()?;
    let n = stats.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RepetitionStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    let mut bank_scores = BTreeMap::new();
    for m in BankMember::ALL {
        let det = bank.get(m);
        let spec = det.spec();
        let mut total = 0.0;
        let mut count = 0usize;
        for s in corpus {
            for seg in segments_for_spec(s, spec, spec.window()) {
                total += det.score(&seg.tokens)?;
                count += 1;
            }
        }
        if count > 0 {
            bank_scores.insert(m, total / count as f64);
        }
    }
    Ok(DecoderReport {
        seed,
        decoder: scheme,
        n_sequences: corpus.len(),
        seq_len: cfg.seq_len,
        bigram_kl: bigram_kl(corpus, reference, cfg.vocab_size, cfg.kl_epsilon)?,
        mean_max_run: mean(&|s| s.max_run as f64),
        mean_run: mean(&|s| s.mean_run),
        distinct_1: mean(&|s| s.distinct_1),
        distinct_2: mean(&|s| s.distinct_2),
        bank_scores,
    })
}

/// An ordering asserted across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub passes: usize,
    pub total: usize,
}

impl OrderingCheck {
    /// Holds when a strict majority of seeds pass.
    pub fn holds(&self) -> bool {
        2 * self.passes > self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub runs: Vec<SeedRun>,
    pub checks: Vec<OrderingCheck>,
}

impl BenchmarkOutcome {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(OrderingCheck::holds)
    }
}

/// Per-seed pass/fail of the three asserted orderings: AUROC non-decreasing
/// in segment length, every AUROC above `0.5 + 3 sigma` of the permutation
/// null, and hierarchical EAS drifting no more than plain top-k.
pub fn ordering_checks(runs: &[SeedRun]) -> Vec<OrderingCheck> {
    let count = |pred: &dyn Fn(&SeedRun) -> Option<bool>| -> (usize, usize) {
        let results: Vec<bool> = runs.iter().filter_map(pred).collect();
        (results.iter().filter(|&&b| b).count(), results.len())
    };
    let mut checks = Vec::new();
    let (passes, total) = count(&|r| {
        Some(r.auroc(BankMember::M10)? <= r.auroc(BankMember::M25)? && r.auroc(BankMember::M25)? <= r.auroc(BankMember::M50)?)
    });
    checks.push(OrderingCheck {
        name: "auroc m10 <= m25 <= m50".into(),
        passes,
        total,
    });
    let (passes, total) = count(&|r| Some(r.detectors.iter().all(|d| d.eval.auroc > 0.5 + 3.0 * d.eval.null_std)));
    checks.push(OrderingCheck {
        name: "auroc above permutation null".into(),
        passes,
        total,
    });
    let (passes, total) = count(&|r| {
        Some(r.decoder(Scheme::HierEas)?.bigram_kl <= r.decoder(Scheme::Original)?.bigram_kl)
    });
    if total > 0 {
        checks.push(OrderingCheck {
            name: "bigram kl hier-eas <= original".into(),
            passes,
            total,
        });
    }
    checks
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| synth_benchmark(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let checks = ordering_checks(&runs);
    Ok(BenchmarkOutcome { runs, checks })
}

/// Plain-text table of per-seed detector and decoder results.
pub fn summary_table(outcome: &BenchmarkOutcome) -> String {
    let mut out = String::new();
    out.push_str("detectors\n");
    out.push_str(&format!(
        "{:>6} {:<8} {:>8} {:>8} {:>8} {:>8}\n",
        "seed", "member", "auroc", "acc", "macroF1", "3sigma"
    ));
    for run in &outcome.runs {
        for d in &run.detectors {
            out.push_str(&format!(
                "{:>6} {:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                run.seed,
                d.eval.member.name(),
                d.eval.auroc,
                d.eval.accuracy,
                d.eval.macro_f1,
                3.0 * d.eval.null_std
            ));
        }
    }
    out.push_str("\ndecoders\n");
    out.push_str(&format!(
        "{:>6} {:<9} {:>9} {:>8} {:>8} {:>8} {:>8}\n",
        "seed", "decoder", "bigramKL", "maxRun", "meanRun", "dist1", "dist2"
    ));
    for run in &outcome.runs {
        for d in &run.decoders {
            out.push_str(&format!(
                "{:>6} {:<9} {:>9.5} {:>8.3} {:>8.3} {:>8.4} {:>8.4}\n",
                run.seed, d.decoder, d.bigram_kl, d.mean_max_run, d.mean_run, d.distinct_1, d.distinct_2
            ));
        }
    }
    out.push_str("\nchecks\n");
    for c in &outcome.checks {
        out.push_str(&format!(
            "{} {}/{} {}\n",
            if c.holds() { "PASS" } else { "FAIL" },
            c.passes,
            c.total,
            c.name
        ));
    }
    out
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(&row)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `detectors.jsonl`, `decoders.jsonl`, `checks.jsonl` and
/// `summary.txt`, which are reproducible, plus `timing.jsonl`, which is not.
pub fn write_reports(outcome: &BenchmarkOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join("detectors.jsonl"), outcome.runs.iter().flat_map(|r| &r.detectors))?;
    write_jsonl(&dir.join("decoders.jsonl"), outcome.runs.iter().flat_map(|r| &r.decoders))?;
    write_jsonl(&dir.join("checks.jsonl"), &outcome.checks)?;
    write_jsonl(&dir.join("timing.jsonl"), outcome.runs.iter().flat_map(|r| &r.timings))?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, summary_table(outcome)).map_err(|e| Error::io(&summary, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(v: usize, data: &[&[TokenId]]) -> Vec<TokenSequence> {
        data.iter().map(|t| TokenSequence::new(v, t.to_vec()).unwrap()).collect()
    }

    #[test]
    fn identical_corpora_have_zero_kl() {
        let c = seqs(3, &[&[0, 1, 2, 1, 0], &[2, 2, 1]]);
        assert!(bigram_kl(&c, &c, 3, 0.5).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_token_kl_by_hand() {
        // reference bigrams: 00 x1, 01 x2, 10 x1, 11 x0 (tokens 0 0 1 0 1)
        // candidate bigrams: 11 x3, 10 x1 (tokens 1 1 1 1 0)
        let r = seqs(2, &[&[0, 0, 1, 0, 1]]);
        let c = seqs(2, &[&[1, 1, 1, 1, 0]]);
        let eps = 0.25;
        let p: [f64; 4] = [1.25 / 5.0, 2.25 / 5.0, 1.25 / 5.0, 0.25 / 5.0];
        let q: [f64; 4] = [0.25 / 5.0, 0.25 / 5.0, 1.25 / 5.0, 3.25 / 5.0];
        let want: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
        assert!((bigram_kl(&c, &r, 2, eps).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn kl_rejects_bad_input() {
        let c = seqs(2, &[&[0, 1]]);
        assert!(bigram_kl(&c, &c, 2, 0.0).is_err());
        assert!(bigram_kl(&[], &c, 2, 0.5).is_err());
    }

    #[test]
    fn repetition_examples() {
        let s = repetition_stats(&[7, 7, 7, 7]).unwrap();
        assert_eq!(s.max_run, 4);
        assert_eq!(s.distinct_1, 0.25);
        assert!((s.distinct_2 - 1.0 / 3.0).abs() < 1e-15);
        let alt: Vec<TokenId> = (0..20).map(|i| i % 2).collect();
        let s = repetition_stats(&alt).unwrap();
        assert_eq!(s.max_run, 1);
        assert_eq!(s.mean_run, 1.0);
        assert!(repetition_stats(&[]).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("beam".parse::<Scheme>().is_err());
    }

    #[test]
    fn loop_model_is_normalized() {
        let m = LoopProneModel::default();
        for prefix in [vec![], vec![3], vec![3, 3, 31]] {
            let d = m.dist(&prefix);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(m.dist(&[5])[5] >= 0.5);
    }

    #[test]
    fn bank_presence_is_checked() {
        let m = LoopProneModel::default();
        let s = DecoderSettings::default();
        let none: Option<&DetectorBank<crate::detector::ConstantDetector>> = None;
        assert!(decode_corpus(&m, none, Scheme::HierEas, &s, 1, 30, 0).is_err());
        let bank = DetectorBank::from_fn(|b| crate::detector::ConstantDetector { spec: b.spec(), value: 0.5 });
        assert!(decode_corpus(&m, Some(&bank), Scheme::Eas, &s, 1, 30, 0).is_err());
        let out = decode_corpus(&m, Some(&bank), Scheme::HierEas, &s, 2, 37, 0).unwrap();
        assert!(out.iter().all(|s| s.len() == 37));
    }
}
