//! Hashed unigram + bigram count features.
//!
//! Bucket assignment uses the splitmix64 finalizer so serialized detectors
//! are portable across platforms and builds:
//!
//! * unigram `a`: `mix(0x55 << 56 ^ a) % D`
//! * bigram `(a, b)`: `mix(mix(0x42 << 56 ^ a) ^ b) % D`

use crate::token::TokenId;

pub const HASH_ID: &str = "splitmix64-unigram-bigram-v1";
pub const DEFAULT_FEATURE_DIM: usize = 4096;

const UNIGRAM_TAG: u64 = 0x55 << 56;
const BIGRAM_TAG: u64 = 0x42 << 56;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn unigram_bucket(a: TokenId, dim: usize) -> usize {
    (mix(UNIGRAM_TAG ^ a as u64) % dim as u64) as usize
}

pub fn bigram_bucket(a: TokenId, b: TokenId, dim: usize) -> usize {
    (mix(mix(BIGRAM_TAG ^ a as u64) ^ b as u64) % dim as u64) as usize
}

/// Sparse feature vector: `(bucket, count)` pairs sorted by bucket, no
/// duplicate buckets, no zero values.
pub type SparseFeatures = Vec<(usize, f64)>;

pub fn featurize(tokens: &[TokenId], dim: usize) -> SparseFeatures {
    assert!(dim >= 2, "feature dimension must be at least 2");
    let mut raw: Vec<usize> = Vec::with_capacity(tokens.len() * 2);
    raw.extend(tokens.iter().map(|&a| unigram_bucket(a, dim)));
    raw.extend(tokens.windows(2).map(|w| bigram_bucket(w[0], w[1], dim)));
    raw.sort_unstable();
    let mut out: SparseFeatures = Vec::with_capacity(raw.len());
    for b in raw {
        match out.last_mut() {
            Some((last, c)) if *last == b => *c += 1.0,
            _ => out.push((b, 1.0)),
        }
    }
    out
}

pub fn dot(weights: &[f64], x: &SparseFeatures) -> f64 {
    x.iter().map(|&(i, v)| weights[i] * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(x: &SparseFeatures, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        for &(i, v) in x {
            d[i] += v;
        }
        d
    }

    #[test]
    fn empty_segment_has_no_features() {
        assert!(featurize(&[], 64).is_empty());
    }

    #[test]
    fn repeated_token_counts() {
        let dim = 4096;
        let x = dense(&featurize(&[7, 7], dim), dim);
        assert_eq!(x[unigram_bucket(7, dim)], 2.0);
        assert_eq!(x[bigram_bucket(7, 7, dim)], 1.0);
        assert_eq!(x.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn permutation_keeps_unigrams_changes_bigrams() {
        let dim = 4096;
        let a = [1, 2, 3, 4];
        let b = [4, 3, 2, 1];
        let xa = dense(&featurize(&a, dim), dim);
        let xb = dense(&featurize(&b, dim), dim);
        let uni_a: f64 = a.iter().map(|&t| xa[unigram_bucket(t, dim)]).sum();
        let uni_b: f64 = a.iter().map(|&t| xb[unigram_bucket(t, dim)]).sum();
        assert_eq!(uni_a, uni_b);
        assert_eq!(xa.iter().sum::<f64>(), xb.iter().sum::<f64>());
        assert_ne!(xa, xb);
        assert_eq!(xa[bigram_bucket(1, 2, dim)], 1.0);
        assert_eq!(xb[bigram_bucket(2, 1, dim)], 1.0);
    }

    #[test]
    fn hash_is_stable() {
        // Frozen so that serialized detectors stay loadable.
        assert_eq!(mix(0), 0xE220_A839_7B1D_CDAF);
        assert!(unigram_bucket(3, 4096) < 4096);
        assert_ne!(bigram_bucket(1, 2, 1 << 20), bigram_bucket(2, 1, 1 << 20));
    }

    #[test]
    fn features_are_sorted_and_merged() {
        let x = featurize(&[0, 1, 0, 1, 0, 1], 16);
        assert!(x.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(x.iter().map(|p| p.1).sum::<f64>(), 11.0);
    }
}
