use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{dot, featurize, SparseFeatures, DEFAULT_FEATURE_DIM, HASH_ID};
use super::metrics::mean_bce;
use super::SegmentDetector;
use crate::error::{Error, Result};
use crate::rng;
use crate::token::{crop_segments_random, segments_for_spec, skip_sample, SegmentSpec, TokenId, TokenSequence};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression over hashed n-gram counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLogisticDetector {
    spec: SegmentSpec,
    weights: Vec<f64>,
    bias: f64,
}

impl FeatureLogisticDetector {
    /// All-zero detector; scores 0.5 everywhere.
    pub fn zeros(spec: SegmentSpec, feature_dim: usize) -> Self {
        assert!(feature_dim >= 2, "feature dimension must be at least 2");
        Self {
            spec,
            weights: vec![0.0; feature_dim],
            bias: 0.0,
        }
    }

    pub fn from_parts(spec: SegmentSpec, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("feature dimension must be at least 2"));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("detector parameters must be finite"));
        }
        Ok(Self { spec, weights, bias })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn logit(&self, tokens: &[TokenId]) -> Result<f64> {
        if tokens.len() != self.spec.length {
            return Err(Error::LengthMismatch {
                expected: self.spec.length,
                actual: tokens.len(),
            });
        }
        Ok(self.logit_features(&featurize(tokens, self.feature_dim())))
    }

    fn logit_features(&self, x: &SparseFeatures) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn to_document(&self) -> DetectorDocument {
        DetectorDocument {
            format_version: FORMAT_VERSION,
            spec: self.spec,
            feature_dim: self.feature_dim(),
            weights: self.weights.clone(),
            bias: self.bias,
            hash_id: HASH_ID.to_string(),
        }
    }

    pub fn from_document(doc: DetectorDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported detector format_version {}",
                doc.format_version
            )));
        }
        if doc.hash_id != HASH_ID {
            return Err(Error::invalid(format!(
                "detector was trained with feature hash {:?}, this build uses {HASH_ID:?}",
                doc.hash_id
            )));
        }
        if doc.weights.len() != doc.feature_dim {
            return Err(Error::invalid(format!(
                "feature_dim is {} but {} weights stored",
                doc.feature_dim,
                doc.weights.len()
            )));
        }
        let spec = SegmentSpec::new(doc.spec.length, doc.spec.stride)?;
        Self::from_parts(spec, doc.weights, doc.bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(&self.to_document())?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(serde_json::from_str(&text)?)
    }
}

impl SegmentDetector for FeatureLogisticDetector {
    fn spec(&self) -> SegmentSpec {
        self.spec
    }

    fn score(&self, tokens: &[TokenId]) -> Result<f64> {
        Ok(sigmoid(self.logit(tokens)?))
    }
}

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorDocument {
    pub format_version: u32,
    pub spec: SegmentSpec,
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hash_id: String,
}

/// Mini-batch gradient descent settings for [`bce_train`].
///
/// `Default` is tuned for plain gradient descent on count features. The
/// optimizer settings quoted for the original attention detectors are
/// available as [`TrainConfig::adamw_reference`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub feature_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }
}

impl TrainConfig {
    /// learning rate 1e-4 and weight decay 1e-4.
    pub fn adamw_reference() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.feature_dim < 2 {
            return Err(Error::invalid("feature_dim must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSegment {
    pub tokens: Vec<TokenId>,
    /// true for natural (real) segments.
    pub is_real: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Regularized objective after each epoch.
    pub epoch_objective: Vec<f64>,
    /// Mean BCE on the training set after the last epoch.
    pub final_loss: f64,
}

/// Fits a [`FeatureLogisticDetector`] by minimizing mean BCE plus
/// `weight_decay / 2 * |w|^2` (bias not decayed). Deterministic in
/// `cfg.seed`.
pub fn bce_train(
    examples: &[LabeledSegment],
    spec: SegmentSpec,
    cfg: &TrainConfig,
) -> Result<(FeatureLogisticDetector, TrainReport)> {
    cfg.validate()?;
    if let Some(bad) = examples.iter().find(|e| e.tokens.len() != spec.length) {
        return Err(Error::LengthMismatch {
            expected: spec.length,
            actual: bad.tokens.len(),
        });
    }
    if !examples.iter().any(|e| e.is_real) || examples.iter().all(|e| e.is_real) {
        return Err(Error::DegenerateLabels);
    }

    let dim = cfg.feature_dim;
    let xs: Vec<SparseFeatures> = examples.iter().map(|e| featurize(&e.tokens, dim)).collect();
    let ys: Vec<f64> = examples.iter().map(|e| if e.is_real { 1.0 } else { 0.0 }).collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.is_real).collect();

    let mut det = FeatureLogisticDetector::zeros(spec, dim);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = rng::seeded(cfg.seed);
    let mut grad = vec![0.0; dim];
    let mut touched: Vec<usize> = Vec::new();
    let mut epoch_objective = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_b = 0.0;
            for &i in batch {
                let err = sigmoid(det.logit_features(&xs[i])) - ys[i];
                grad_b += err;
                for &(j, v) in &xs[i] {
                    if grad[j] == 0.0 {
                        touched.push(j);
                    }
                    grad[j] += err * v;
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            let shrink = 1.0 - cfg.learning_rate * cfg.weight_decay;
            if shrink != 1.0 {
                det.weights.iter_mut().for_each(|w| *w *= shrink);
            }
            for &j in &touched {
                det.weights[j] -= scale * grad[j];
                grad[j] = 0.0;
            }
            touched.clear();
            det.bias -= scale * grad_b;
        }
        let scores: Vec<f64> = xs.iter().map(|x| sigmoid(det.logit_features(x))).collect();
        let l2: f64 = det.weights.iter().map(|w| w * w).sum();
        epoch_objective.push(mean_bce(&scores, &labels)? + 0.5 * cfg.weight_decay * l2);
    }

    let scores: Vec<f64> = xs.iter().map(|x| sigmoid(det.logit_features(x))).collect();
    let final_loss = mean_bce(&scores, &labels)?;
    Ok((
        det,
        TrainReport {
            epoch_objective,
            final_loss,
        },
    ))
}

/// How training windows are cut from each sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    /// Windows at offsets `0, hop, 2*hop, ...`.
    Hop(usize),
    /// Non-overlapping windows (`hop = window`).
    NonOverlapping,
    /// `per_sequence` windows at uniform random offsets.
    Random { per_sequence: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub spec: SegmentSpec,
    pub examples: Vec<LabeledSegment>,
    pub n_real: usize,
    pub n_fake: usize,
}

/// Labeled segments for one detector resolution: windows of
/// `spec.window()` tokens, skip-sampled down to `spec.length`, shuffled
/// with `seed`.
pub fn build_training_set(
    real: &[TokenSequence],
    fake: &[TokenSequence],
    spec: SegmentSpec,
    mode: CropMode,
    seed: u64,
) -> Result<TrainingSet> {
    if let (Some(r), Some(f)) = (real.first(), fake.first()) {
        if real.iter().chain(fake).any(|s| s.vocab_size() != r.vocab_size())
            || r.vocab_size() != f.vocab_size()
        {
            return Err(Error::invalid("real and fake corpora must share one vocabulary"));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut cut = |seqs: &[TokenSequence], is_real: bool| -> Vec<LabeledSegment> {
        let mut out = Vec::new();
        for s in seqs {
            let segs: Vec<Vec<TokenId>> = match mode {
                CropMode::Hop(hop) => segments_for_spec(s, spec, hop.max(1))
                    .into_iter()
                    .map(|g| g.tokens)
                    .collect(),
                CropMode::NonOverlapping => segments_for_spec(s, spec, spec.window())
                    .into_iter()
                    .map(|g| g.tokens)
                    .collect(),
                CropMode::Random { per_sequence } => {
                    crop_segments_random(s, spec.window(), per_sequence, &mut rng)
                        .into_iter()
                        .map(|g| skip_sample(&g.tokens, spec.stride))
                        .collect()
                }
            };
            out.extend(segs.into_iter().map(|tokens| LabeledSegment { tokens, is_real }));
        }
        out
    };
    let mut examples = cut(real, true);
    let n_real = examples.len();
    examples.extend(cut(fake, false));
    let n_fake = examples.len() - n_real;
    for (n, class) in [(n_real, "real"), (n_fake, "fake")] {
        if n == 0 {
            return Err(Error::InsufficientData {
                spec: spec.to_string(),
                message: format!("no {class} sequence is at least {} tokens long", spec.window()),
            });
        }
    }
    examples.shuffle(&mut rng);
    Ok(TrainingSet {
        spec,
        examples,
        n_real,
        n_fake,
    })
}
