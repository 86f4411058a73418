//! Next-token distribution providers.
//!
//! [`NGramModel`] is the frozen autoregressive model the decoders query.
//! [`HmmSource`] generates the "natural" corpora the n-gram model is
//! trained on and the detectors learn to recognise.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::{TokenId, TokenSequence};

/// Anything that maps a prefix to a probability vector over the vocabulary.
pub trait NextTokenModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Probability of each next token given `prefix`. Entries are
    /// non-negative and sum to one.
    fn dist(&self, prefix: &[TokenId]) -> Vec<f64>;
}

impl<M: NextTokenModel + ?Sized> NextTokenModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        (**self).dist(prefix)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    counts: Vec<u64>,
}

/// Additively smoothed n-gram model with backoff to the longest context
/// suffix seen during training.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    vocab_size: usize,
    order: usize,
    lambda: f64,
    contexts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl NGramModel {
    /// Counts every context of length `0..order` preceding each token.
    pub fn train(
        corpus: &[TokenSequence],
        vocab_size: usize,
        order: usize,
        lambda: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "smoothing lambda must be positive, got {lambda}"
            )));
        }
        if vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        let mut contexts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for seq in corpus {
            if seq.vocab_size() != vocab_size {
                return Err(Error::invalid(format!(
                    "corpus mixes vocabularies: {} vs {vocab_size}",
                    seq.vocab_size()
                )));
            }
            let toks = seq.tokens();
            for (t, &next) in toks.iter().enumerate() {
                for k in 0..order.min(t + 1) {
                    let entry = contexts
                        .entry(toks[t - k..t].to_vec())
                        .or_insert_with(|| ContextCounts {
                            total: 0,
                            counts: vec![0; vocab_size],
                        });
                    entry.counts[next as usize] += 1;
                    entry.total += 1;
                }
            }
        }
        Ok(Self {
            vocab_size,
            order,
            lambda,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Longest suffix of `prefix` (at most `order - 1` tokens) with counts.
    fn context_for<'a>(&'a self, prefix: &[TokenId]) -> Option<&'a ContextCounts> {
        let max_k = (self.order - 1).min(prefix.len());
        (0..=max_k)
            .rev()
            .find_map(|k| self.contexts.get(&prefix[prefix.len() - k..]))
    }

    pub fn to_document(&self) -> NGramDocument {
        let mut keys: Vec<&Vec<TokenId>> = self.contexts.keys().collect();
        keys.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let mut counts = Vec::new();
        for key in keys {
            let cc = &self.contexts[key];
            for (tok, &c) in cc.counts.iter().enumerate() {
                if c > 0 {
                    let mut row: Vec<u64> = key.iter().map(|&t| t as u64).collect();
                    row.push(tok as u64);
                    row.push(c);
                    counts.push(row);
                }
            }
        }
        NGramDocument {
            format_version: FORMAT_VERSION,
            kind: NGRAM_TYPE.to_string(),
            vocab_size: self.vocab_size,
            order: self.order,
            lambda: self.lambda,
            counts,
        }
    }

    pub fn from_document(doc: NGramDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format_version {}",
                doc.format_version
            )));
        }
        if doc.kind != NGRAM_TYPE {
            return Err(Error::invalid(format!("unsupported model type {:?}", doc.kind)));
        }
        if doc.order == 0 || doc.vocab_size == 0 || !(doc.lambda > 0.0) {
            return Err(Error::invalid("model needs order >= 1, vocab >= 1, lambda > 0"));
        }
        let mut contexts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for (i, row) in doc.counts.iter().enumerate() {
            if row.len() < 2 || row.len() - 2 >= doc.order {
                return Err(Error::invalid(format!(
                    "count row {i} has {} entries; expected 2..={}",
                    row.len(),
                    doc.order + 1
                )));
            }
            let (ctx, tail) = row.split_at(row.len() - 2);
            if let Some(&bad) = ctx.iter().chain(&tail[..1]).find(|&&t| t as usize >= doc.vocab_size) {
                return Err(Error::invalid(format!(
                    "count row {i} references token {bad} outside vocabulary"
                )));
            }
            let entry = contexts
                .entry(ctx.iter().map(|&t| t as TokenId).collect())
                .or_insert_with(|| ContextCounts {
                    total: 0,
                    counts: vec![0; doc.vocab_size],
                });
            entry.counts[tail[0] as usize] += tail[1];
            entry.total += tail[1];
        }
        Ok(Self {
            vocab_size: doc.vocab_size,
            order: doc.order,
            lambda: doc.lambda,
            contexts,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_document())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(serde_json::from_str(&text)?)
    }
}

impl NextTokenModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        let v = self.vocab_size as f64;
        match self.context_for(prefix) {
            None => vec![1.0 / v; self.vocab_size],
            Some(cc) => {
                let denom = cc.total as f64 + self.lambda * v;
                cc.counts
                    .iter()
                    .map(|&c| (c as f64 + self.lambda) / denom)
                    .collect()
            }
        }
    }
}

const FORMAT_VERSION: u32 = 1;
const NGRAM_TYPE: &str = "ngram";

/// Serialized form of [`NGramModel`]. Each count row is
/// `[context..., token, count]`; the context length is `row.len() - 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NGramDocument {
    pub format_version: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub vocab_size: usize,
    pub order: usize,
    pub lambda: f64,
    pub counts: Vec<Vec<u64>>,
}

/// Discrete hidden Markov model used as the synthetic natural-token source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSource {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
}

fn check_stochastic(name: &str, row: &[f64], width: usize) -> Result<()> {
    if row.len() != width {
        return Err(Error::invalid(format!(
            "{name} has {} entries, expected {width}",
            row.len()
        )));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("{name} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` past the last bucket: take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl HmmSource {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>) -> Result<Self> {
        let states = initial.len();
        if states == 0 {
            return Err(Error::invalid("HMM needs at least one state"));
        }
        check_stochastic("initial distribution", &initial, states)?;
        if transition.len() != states || emission.len() != states {
            return Err(Error::invalid("transition and emission need one row per state"));
        }
        for (i, row) in transition.iter().enumerate() {
            check_stochastic(&format!("transition row {i}"), row, states)?;
        }
        let vocab = emission[0].len();
        if vocab == 0 {
            return Err(Error::invalid("emission rows must be non-empty"));
        }
        for (i, row) in emission.iter().enumerate() {
            check_stochastic(&format!("emission row {i}"), row, vocab)?;
        }
        Ok(Self {
            initial,
            transition,
            emission,
        })
    }

    /// Sticky ring of `states` states: each state stays with probability
    /// `stay`, otherwise moves to a ring neighbour. State `s` emits mostly
    /// from a band of tokens centred at `s * vocab / states`, with
    /// band weights drawn from `structure_seed`.
    pub fn banded(states: usize, vocab_size: usize, stay: f64, band: usize, structure_seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if states == 0 || vocab_size == 0 || band == 0 {
            return Err(Error::invalid("banded HMM needs positive states, vocab and band"));
        }
        if !(0.0..=1.0).contains(&stay) {
            return Err(Error::invalid("stay probability must lie in [0, 1]"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(structure_seed);
        let mut transition = vec![vec![0.0; states]; states];
        for (s, row) in transition.iter_mut().enumerate() {
            if states == 1 {
                row[0] = 1.0;
                continue;
            }
            row[s] += stay;
            let move_p = 1.0 - stay;
            if states == 2 {
                row[(s + 1) % 2] += move_p;
            } else {
                row[(s + 1) % states] += move_p / 2.0;
                row[(s + states - 1) % states] += move_p / 2.0;
            }
        }
        let mut emission = Vec::with_capacity(states);
        for s in 0..states {
            let centre = s * vocab_size / states;
            let mut row = vec![0.0; vocab_size];
            for j in 0..band.min(vocab_size) {
                let tok = (centre + j + vocab_size - band / 2) % vocab_size;
                row[tok] += 0.2 + rng.gen::<f64>();
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= z);
            emission.push(row);
        }
        let initial = vec![1.0 / states as f64; states];
        Self::new(initial, transition, emission)
    }

    pub fn state_count(&self) -> usize {
        self.initial.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.emission[0].len()
    }

    /// Forward generative process: draw a state path and one emission per
    /// step.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> TokenSequence {
        let mut tokens = Vec::with_capacity(len);
        let mut state = sample_index(&self.initial, rng);
        for t in 0..len {
            if t > 0 {
                state = sample_index(&self.transition[state], rng);
            }
            tokens.push(sample_index(&self.emission[state], rng) as TokenId);
        }
        TokenSequence::new(self.vocab_size(), tokens).expect("emission indices are in range")
    }

    /// Mean per-token log-likelihood of `tokens` under the model (forward
    /// algorithm with per-step scaling). `None` for empty input.
    pub fn mean_log_likelihood(&self, tokens: &[TokenId]) -> Option<f64> {
        if tokens.is_empty() {
            return None;
        }
        let n = self.state_count();
        let mut alpha: Vec<f64> = (0..n)
            .map(|s| self.initial[s] * self.emission[s][tokens[0] as usize])
            .collect();
        let mut log_lik = 0.0;
        for (t, &tok) in tokens.iter().enumerate() {
            if t > 0 {
                let mut next = vec![0.0; n];
                for (from, &a) in alpha.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (to, slot) in next.iter_mut().enumerate() {
                        *slot += a * self.transition[from][to];
                    }
                }
                for (s, slot) in next.iter_mut().enumerate() {
                    *slot *= self.emission[s][tok as usize];
                }
                alpha = next;
            }
            let z: f64 = alpha.iter().sum();
            if z == 0.0 {
                return Some(f64::NEG_INFINITY);
            }
            log_lik += z.ln();
            alpha.iter_mut().for_each(|a| *a /= z);
        }
        Some(log_lik / tokens.len() as f64)
    }
}

/// Ordered view of the counts, used by tests that check commutativity.
pub fn count_table(model: &NGramModel) -> BTreeMap<Vec<TokenId>, Vec<u64>> {
    model
        .contexts
        .iter()
        .map(|(k, v)| (k.clone(), v.counts.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(v: usize, t: &[u32]) -> TokenSequence {
        TokenSequence::new(v, t.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn bigram_hand_count() {
        let m = NGramModel::train(&[seq(2, &[0, 1, 0, 1])], 2, 2, 1.0).unwrap();
        assert!(close(&m.dist(&[0]), &[0.25, 0.75], 1e-15));
        // 1 -> 0 seen once: (1+1)/(1+2), (0+1)/(1+2)
        assert!(close(&m.dist(&[1]), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    }

    #[test]
    fn empty_corpus_is_uniform() {
        let m = NGramModel::train(&[], 4, 3, 0.5).unwrap();
        for prefix in [&[][..], &[1], &[3, 2, 0]] {
            assert!(close(&m.dist(prefix), &[0.25; 4], 0.0));
        }
    }

    #[test]
    fn backs_off_to_shorter_context() {
        // context [1] never seen at order 2; falls back to unigram counts.
        let m = NGramModel::train(&[seq(3, &[0, 0, 2])], 3, 2, 1.0).unwrap();
        let unigram = [(2.0 + 1.0) / 6.0, 1.0 / 6.0, 2.0 / 6.0];
        assert!(close(&m.dist(&[1]), &unigram, 1e-15));
        assert!(close(&m.dist(&[]), &unigram, 1e-15));
    }

    #[test]
    fn dist_is_normalized_for_random_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<_> = (0..20)
            .map(|_| seq(6, &(0..30).map(|_| rng.gen_range(0..6)).collect::<Vec<_>>()))
            .collect();
        let m = NGramModel::train(&corpus, 6, 3, 0.1).unwrap();
        for _ in 0..1000 {
            let len = rng.gen_range(0..6);
            let prefix: Vec<u32> = (0..len).map(|_| rng.gen_range(0..6)).collect();
            let d = m.dist(&prefix);
            assert!(d.iter().all(|&p| p > 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn markov_context_truncation() {
        let m = NGramModel::train(&[seq(4, &[0, 1, 2, 3, 2, 1, 0, 2, 2])], 4, 2, 1.0).unwrap();
        assert_eq!(m.dist(&[0, 1, 2]), m.dist(&[3, 1, 2]));
        assert_eq!(m.dist(&[0, 1, 2]), m.dist(&[2]));
    }

    #[test]
    fn training_is_order_insensitive() {
        let a = seq(5, &[0, 1, 2, 3, 4, 0]);
        let b = seq(5, &[4, 4, 3, 1]);
        let m1 = NGramModel::train(&[a.clone(), b.clone()], 5, 3, 1.0).unwrap();
        let m2 = NGramModel::train(&[b, a], 5, 3, 1.0).unwrap();
        assert_eq!(count_table(&m1), count_table(&m2));
        assert_eq!(m1, m2);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(NGramModel::train(&[], 4, 0, 1.0).is_err());
        assert!(NGramModel::train(&[], 4, 2, 0.0).is_err());
        assert!(NGramModel::train(&[seq(3, &[0])], 4, 2, 1.0).is_err());
    }

    #[test]
    fn document_round_trip() {
        let m = NGramModel::train(&[seq(4, &[0, 1, 2, 3, 3, 1]), seq(4, &[2, 2])], 4, 3, 0.3).unwrap();
        let text = serde_json::to_string(&m.to_document()).unwrap();
        let back = NGramModel::from_document(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn document_rejects_unknown_fields_and_bad_rows() {
        let bad = r#"{"format_version":1,"type":"ngram","vocab_size":2,"order":2,"lambda":1.0,"counts":[],"extra":1}"#;
        assert!(serde_json::from_str::<NGramDocument>(bad).is_err());
        let doc = NGramDocument {
            format_version: 1,
            kind: "ngram".into(),
            vocab_size: 2,
            order: 2,
            lambda: 1.0,
            counts: vec![vec![0, 5, 1]],
        };
        assert!(NGramModel::from_document(doc).is_err());
    }

    #[test]
    fn forced_hmm_sequence() {
        let hmm = HmmSource::new(
            vec![1.0, 0.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(hmm.sample(6, &mut rng).tokens(), &[2, 0, 2, 0, 2, 0]);
    }

    #[test]
    fn hmm_sampling_is_seeded() {
        let hmm = HmmSource::banded(4, 12, 0.8, 4, 9).unwrap();
        let a = hmm.sample(64, &mut ChaCha8Rng::seed_from_u64(5));
        let b = hmm.sample(64, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn hmm_rejects_non_stochastic_rows() {
        assert!(HmmSource::new(vec![1.0], vec![vec![0.9]], vec![vec![1.0]]).is_err());
        assert!(HmmSource::new(vec![0.5, 0.5], vec![vec![1.0, 0.0]], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn likelihood_of_forced_sequence() {
        let hmm = HmmSource::new(vec![1.0], vec![vec![1.0]], vec![vec![0.25, 0.75]]).unwrap();
        let ll = hmm.mean_log_likelihood(&[1, 1, 0]).unwrap();
        let expected = (0.75f64.ln() * 2.0 + 0.25f64.ln()) / 3.0;
        assert!((ll - expected).abs() < 1e-12);
        assert!(hmm.mean_log_likelihood(&[]).is_none());
    }
}
