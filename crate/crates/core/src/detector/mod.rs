//! Token-level spoof detectors.
//!
//! A detector maps a fixed-length token segment to the probability that it
//! came from the natural source rather than from the decoder. Five of them,
//! at different segment resolutions, form a [`DetectorBank`].

mod bank;
mod features;
mod logistic;
mod metrics;

pub use bank::{evaluate_detector, train_bank, BankMember, DetectorBank, DetectorEval, TrainedBank};
pub use features::{
    bigram_bucket, dot, featurize, unigram_bucket, SparseFeatures, DEFAULT_FEATURE_DIM, HASH_ID,
};
pub use logistic::{
    bce_train, build_training_set, CropMode, DetectorDocument, FeatureLogisticDetector,
    LabeledSegment, TrainConfig, TrainReport, TrainingSet,
};
pub use metrics::{accuracy_at, auroc, auroc_null_std, macro_f1_at, mean_bce, Confusion};

use std::sync::Arc;

use crate::error::Result;
use crate::token::{SegmentSpec, TokenId};

/// Scores a segment of exactly `spec().length` tokens. Scores lie in
/// `[0, 1]`; higher means more natural.
pub trait SegmentDetector: Send + Sync {
    fn spec(&self) -> SegmentSpec;

    fn score(&self, tokens: &[TokenId]) -> Result<f64>;
}

impl<D: SegmentDetector + ?Sized> SegmentDetector for &D {
    fn spec(&self) -> SegmentSpec {
        (**self).spec()
    }
    fn score(&self, tokens: &[TokenId]) -> Result<f64> {
        (**self).score(tokens)
    }
}

impl<D: SegmentDetector + ?Sized> SegmentDetector for Box<D> {
    fn spec(&self) -> SegmentSpec {
        (**self).spec()
    }
    fn score(&self, tokens: &[TokenId]) -> Result<f64> {
        (**self).score(tokens)
    }
}

impl<D: SegmentDetector + ?Sized> SegmentDetector for Arc<D> {
    fn spec(&self) -> SegmentSpec {
        (**self).spec()
    }
    fn score(&self, tokens: &[TokenId]) -> Result<f64> {
        (**self).score(tokens)
    }
}

/// Free-function form of [`SegmentDetector::score`].
pub fn score_segment<D: SegmentDetector + ?Sized>(detector: &D, tokens: &[TokenId]) -> Result<f64> {
    detector.score(tokens)
}

/// Detector returning the same score for every segment of its length.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDetector {
    pub spec: SegmentSpec,
    pub value: f64,
}

impl SegmentDetector for ConstantDetector {
    fn spec(&self) -> SegmentSpec {
        self.spec
    }

    fn score(&self, tokens: &[TokenId]) -> Result<f64> {
        if tokens.len() != self.spec.length {
            return Err(crate::Error::LengthMismatch {
                expected: self.spec.length,
                actual: tokens.len(),
            });
        }
        Ok(self.value)
    }
}
