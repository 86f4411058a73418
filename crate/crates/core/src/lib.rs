//! Detector-guided decoding for autoregressive token models.
//!
//! The crate covers the full pipeline on integer token sequences: an n-gram
//! next-token model, entropy-aware sampling and baselines, hashed-feature
//! logistic detectors over fixed-length segments, hierarchical decoding that
//! prunes candidate chunks with a bank of detectors, and a synthetic
//! benchmark harness that compares decoders.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod armodel;
pub mod detector;
pub mod error;
pub mod harness;
pub mod hierdecode;
pub mod rng;
pub mod sampling;
pub mod token;

pub use error::{Error, Result};
pub use token::{SegmentSpec, TokenId, TokenSequence};
