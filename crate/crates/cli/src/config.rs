//! Layered configuration: built-in defaults, then an optional JSON file,
//! then command-line flags.

use std::path::Path;

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use spoofguide::harness::{BenchmarkConfig, Scheme};

/// Everything a command can be configured with. Field paths in the JSON
/// file mirror this structure; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub benchmark: BenchmarkConfig,
    pub run: RunConfig,
}

/// Settings for single-shot commands (`gen-data`, `decode`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Sequences to decode.
    pub n: usize,
    /// Tokens per decoded sequence.
    pub len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 10,
            len: 220,
        }
    }
}

/// Merges `overlay` into `base`, recursing into objects. Non-object
/// values replace.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults (or the smoke preset), overlaid with `file` if given.
pub fn load(file: Option<&Path>, smoke: bool) -> anyhow::Result<CliConfig> {
    let base = CliConfig {
        benchmark: if smoke {
            BenchmarkConfig::smoke()
        } else {
            BenchmarkConfig::default()
        },
        run: RunConfig::default(),
    };
    let Some(path) = file else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| spoofguide::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    let overlay: Value = serde_json::from_str(&text)
        .map_err(spoofguide::Error::from)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut merged = serde_json::to_value(&base).map_err(spoofguide::Error::from)?;
    merge(&mut merged, overlay);
    let cfg = serde_json::from_value(merged)
        .map_err(spoofguide::Error::from)
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let parse = |p: &str| p.parse::<T>().map_err(|_| format!("invalid value {p:?}"));
    Ok([parse(parts[0])?, parse(parts[1])?, parse(parts[2])?])
}

fn usize_triple(s: &str) -> Result<[usize; 3], String> {
    triple(s)
}

fn f64_triple(s: &str) -> Result<[f64; 3], String> {
    triple(s)
}

/// Flags that override configuration fields. Each flag names the JSON
/// path it overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    // EAS
    /// EAS penalty scale alpha [benchmark.decoding.hier.eas.alpha] (default 0.2)
    #[arg(long, global = true, help_heading = "EAS")]
    pub alpha: Option<f64>,
    /// EAS age decay beta [benchmark.decoding.hier.eas.beta] (default 0.7)
    #[arg(long, global = true, help_heading = "EAS")]
    pub beta: Option<f64>,
    /// EAS penalty cap gamma [benchmark.decoding.hier.eas.gamma] (default 0.8)
    #[arg(long, global = true, help_heading = "EAS")]
    pub gamma: Option<f64>,
    /// EAS cluster size k_e [benchmark.decoding.hier.eas.cluster_k] (default 3)
    #[arg(long, global = true, help_heading = "EAS")]
    pub cluster_k: Option<usize>,
    /// EAS memory window W [benchmark.decoding.hier.eas.window] (default 15)
    #[arg(long, global = true, help_heading = "EAS")]
    pub memory_window: Option<usize>,
    /// EAS nucleus threshold [benchmark.decoding.hier.eas.top_p] (default 0.8)
    #[arg(long, global = true, help_heading = "EAS")]
    pub eas_top_p: Option<f64>,
    /// EAS top-k [benchmark.decoding.hier.eas.top_k] (default 50)
    #[arg(long, global = true, help_heading = "EAS")]
    pub eas_top_k: Option<usize>,
    /// EAS temperature [benchmark.decoding.hier.eas.temperature] (default 1.0)
    #[arg(long, global = true, help_heading = "EAS")]
    pub eas_temperature: Option<f64>,

    // Original scheme
    /// Top-k of the original scheme [benchmark.decoding.top_k] (default 50)
    #[arg(long, global = true, help_heading = "Original top-k")]
    pub top_k: Option<usize>,
    /// Temperature of the original scheme [benchmark.decoding.temperature] (default 1.0)
    #[arg(long, global = true, help_heading = "Original top-k")]
    pub temperature: Option<f64>,

    // RAS-style
    /// RAS-style top-k [benchmark.decoding.ras.top_k] (default 50)
    #[arg(long, global = true, help_heading = "RAS-style windowed penalty")]
    pub ras_top_k: Option<usize>,
    /// RAS-style nucleus threshold [benchmark.decoding.ras.top_p] (default 0.8)
    #[arg(long, global = true, help_heading = "RAS-style windowed penalty")]
    pub ras_top_p: Option<f64>,
    /// RAS-style repetition window [benchmark.decoding.ras.window] (default 25)
    #[arg(long, global = true, help_heading = "RAS-style windowed penalty")]
    pub ras_window: Option<usize>,
    /// RAS-style repetition penalty tau_r [benchmark.decoding.ras.penalty] (default 0.1)
    #[arg(long, global = true, help_heading = "RAS-style windowed penalty")]
    pub ras_penalty: Option<f64>,
    /// RAS-style temperature [benchmark.decoding.ras.temperature] (default 1.0)
    #[arg(long, global = true, help_heading = "RAS-style windowed penalty")]
    pub ras_temperature: Option<f64>,

    // Hierarchical
    /// Warmup length L_w [benchmark.decoding.hier.warmup_len] (default 20)
    #[arg(long, global = true, help_heading = "Hierarchical")]
    pub warmup_len: Option<usize>,
    /// Stage lengths L1,L2,L3 [benchmark.decoding.hier.stage_lens] (default 10,25,50)
    #[arg(long, global = true, value_parser = usize_triple, help_heading = "Hierarchical")]
    pub stage_lens: Option<[usize; 3]>,
    /// Beam counts B0,B1,B2 [benchmark.decoding.hier.beams] (default 8,5,3)
    #[arg(long, global = true, value_parser = usize_triple, help_heading = "Hierarchical")]
    pub beams: Option<[usize; 3]>,
    /// Rank weights w50,w25,w10 [benchmark.decoding.hier.rank_weights] (default equal, 1/3 each)
    #[arg(long, global = true, value_parser = f64_triple, help_heading = "Hierarchical")]
    pub rank_weights: Option<[f64; 3]>,

    // Detector training
    /// Detector learning rate [benchmark.train.learning_rate] (default 0.05)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub learning_rate: Option<f64>,
    /// Detector weight decay [benchmark.train.weight_decay] (default 1e-4)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub weight_decay: Option<f64>,
    /// Training epochs [benchmark.train.epochs] (default 30)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub epochs: Option<usize>,
    /// Mini-batch size [benchmark.train.batch_size] (default 32)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub batch_size: Option<usize>,
    /// Shuffling seed [benchmark.train.seed] (default 0)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub train_seed: Option<u64>,
    /// Hashed feature dimension [benchmark.train.feature_dim] (default 4096)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub feature_dim: Option<usize>,
    /// Offset between training windows [benchmark.crop_hop] (default 10)
    #[arg(long, global = true, help_heading = "Detector training")]
    pub crop_hop: Option<usize>,

    // Data and generator
    /// Vocabulary size [benchmark.vocab_size] (default 32)
    #[arg(long, global = true, help_heading = "Data")]
    pub vocab_size: Option<usize>,
    /// Hidden states of the source [benchmark.source.states] (default 8)
    #[arg(long, global = true, help_heading = "Data")]
    pub hmm_states: Option<usize>,
    /// Source self-transition probability [benchmark.source.stay] (default 0.85)
    #[arg(long, global = true, help_heading = "Data")]
    pub hmm_stay: Option<f64>,
    /// Tokens emitted per source state [benchmark.source.band] (default 6)
    #[arg(long, global = true, help_heading = "Data")]
    pub hmm_band: Option<usize>,
    /// Source structure seed [benchmark.source.structure_seed] (default 7)
    #[arg(long, global = true, help_heading = "Data")]
    pub structure_seed: Option<u64>,
    /// Real sequences [benchmark.n_real] (default 300)
    #[arg(long, global = true, help_heading = "Data")]
    pub n_real: Option<usize>,
    /// Tokens per real sequence [benchmark.seq_len] (default 220)
    #[arg(long, global = true, help_heading = "Data")]
    pub seq_len: Option<usize>,
    /// Generated sequences per real sequence [benchmark.fakes_per_real] (default 3)
    #[arg(long, global = true, help_heading = "Data")]
    pub fakes_per_real: Option<usize>,
    /// Held-out share of real sequences [benchmark.holdout_fraction] (default 0.25)
    #[arg(long, global = true, help_heading = "Data")]
    pub holdout_fraction: Option<f64>,
    /// n-gram order [benchmark.ar_order] (default 2)
    #[arg(long, global = true, help_heading = "Data")]
    pub ar_order: Option<usize>,
    /// n-gram additive smoothing [benchmark.ar_lambda] (default 20)
    #[arg(long, global = true, help_heading = "Data")]
    pub ar_lambda: Option<f64>,

    // Benchmark
    /// Decoders to compare [benchmark.decoders] (default original,ras,eas,hier-ras,hier-eas)
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Benchmark")]
    pub decoders: Option<Vec<Scheme>>,
    /// Sequences per decoder, 0 = one per held-out sequence [benchmark.n_decode] (default 0)
    #[arg(long, global = true, help_heading = "Benchmark")]
    pub n_decode: Option<usize>,
    /// Bigram smoothing pseudo-count [benchmark.kl_epsilon] (default 0.5)
    #[arg(long, global = true, help_heading = "Benchmark")]
    pub kl_epsilon: Option<f64>,
    /// Benchmark seeds [benchmark.seeds] (default 1,2,3,4,5)
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Benchmark")]
    pub seeds: Option<Vec<u64>>,

    // Single runs
    /// Seed of gen-data and decode [run.seed] (default 0)
    #[arg(long, global = true, help_heading = "Runs")]
    pub seed: Option<u64>,
    /// Sequences to decode [run.n] (default 10)
    #[arg(long, global = true, help_heading = "Runs")]
    pub n: Option<usize>,
    /// Tokens per decoded sequence [run.len] (default 220)
    #[arg(long, global = true, help_heading = "Runs")]
    pub len: Option<usize>,
}

macro_rules! apply {
    ($($flag:expr => $field:expr),* $(,)?) => {
        $(if let Some(v) = $flag.clone() { $field = v; })*
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut CliConfig) {
        let b = &mut cfg.benchmark;
        let d = &mut b.decoding;
        apply! {
            self.alpha => d.hier.eas.alpha,
            self.beta => d.hier.eas.beta,
            self.gamma => d.hier.eas.gamma,
            self.cluster_k => d.hier.eas.cluster_k,
            self.memory_window => d.hier.eas.window,
            self.eas_top_p => d.hier.eas.top_p,
            self.eas_top_k => d.hier.eas.top_k,
            self.eas_temperature => d.hier.eas.temperature,
            self.top_k => d.top_k,
            self.temperature => d.temperature,
            self.ras_top_k => d.ras.top_k,
            self.ras_top_p => d.ras.top_p,
            self.ras_window => d.ras.window,
            self.ras_penalty => d.ras.penalty,
            self.ras_temperature => d.ras.temperature,
            self.warmup_len => d.hier.warmup_len,
            self.stage_lens => d.hier.stage_lens,
            self.beams => d.hier.beams,
            self.rank_weights => d.hier.rank_weights,
            self.learning_rate => b.train.learning_rate,
            self.weight_decay => b.train.weight_decay,
            self.epochs => b.train.epochs,
            self.batch_size => b.train.batch_size,
            self.train_seed => b.train.seed,
            self.feature_dim => b.train.feature_dim,
            self.crop_hop => b.crop_hop,
            self.vocab_size => b.vocab_size,
            self.hmm_states => b.source.states,
            self.hmm_stay => b.source.stay,
            self.hmm_band => b.source.band,
            self.structure_seed => b.source.structure_seed,
            self.n_real => b.n_real,
            self.seq_len => b.seq_len,
            self.fakes_per_real => b.fakes_per_real,
            self.holdout_fraction => b.holdout_fraction,
            self.ar_order => b.ar_order,
            self.ar_lambda => b.ar_lambda,
            self.decoders => b.decoders,
            self.n_decode => b.n_decode,
            self.kl_epsilon => b.kl_epsilon,
            self.seeds => b.seeds,
            self.seed => cfg.run.seed,
            self.n => cfg.run.n,
            self.len => cfg.run.len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_other_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"benchmark": {"decoding": {"hier": {"eas": {"alpha": 0.5}}}}}"#).unwrap();
        let cfg = load(Some(&path), false).unwrap();
        assert_eq!(cfg.benchmark.decoding.hier.eas.alpha, 0.5);
        assert_eq!(cfg.benchmark.decoding.hier.eas.beta, 0.7);
        assert_eq!(cfg.run, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"benchmark": {"decoding": {"hier": {"eas": {"alhpa": 0.5}}}}}"#).unwrap();
        assert!(load(Some(&path), false).is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = CliConfig::default();
        cfg.benchmark.decoding.hier.eas.alpha = 0.5;
        let ov = Overrides {
            alpha: Some(0.3),
            beams: Some([4, 2, 1]),
            ..Overrides::default()
        };
        ov.apply(&mut cfg);
        assert_eq!(cfg.benchmark.decoding.hier.eas.alpha, 0.3);
        assert_eq!(cfg.benchmark.decoding.hier.beams, [4, 2, 1]);
    }

    #[test]
    fn triples_parse() {
        assert_eq!(usize_triple("10, 25,50").unwrap(), [10, 25, 50]);
        assert!(usize_triple("10,25").is_err());
        assert!(f64_triple("a,b,c").is_err());
    }
}
