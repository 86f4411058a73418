use rand::Rng;

use crate::error::{Error, Result};
use crate::token::TokenId;

/// Token ids ordered by descending probability, ties by lower id.
pub fn ranked_indices(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx
}

/// `p_i^(1/T)` renormalized. `T = 1` returns the input unchanged.
pub fn apply_temperature(probs: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    if temperature == 1.0 {
        return probs.to_vec();
    }
    let inv = 1.0 / temperature;
    let mut out: Vec<f64> = probs.iter().map(|&p| p.powf(inv)).collect();
    let z: f64 = out.iter().sum();
    if z > 0.0 {
        out.iter_mut().for_each(|p| *p /= z);
    }
    out
}

/// Keeps the `k` most probable tokens and renormalizes.
pub fn filter_top_k(probs: &[f64], k: usize) -> Vec<f64> {
    assert!(k >= 1, "top-k needs k >= 1");
    if k >= probs.len() {
        return probs.to_vec();
    }
    let mut out = vec![0.0; probs.len()];
    for &i in ranked_indices(probs).iter().take(k) {
        out[i] = probs[i];
    }
    let z: f64 = out.iter().sum();
    if z > 0.0 {
        out.iter_mut().for_each(|p| *p /= z);
    }
    out
}

/// The nucleus in rank order plus its mass. Works on unnormalized weights:
/// the threshold is `top_p` times the total mass.
fn nucleus(weights: &[f64], top_p: f64) -> Result<(Vec<usize>, f64)> {
    assert!(top_p > 0.0 && top_p <= 1.0, "top_p must lie in (0, 1]");
    let total: f64 = weights.iter().filter(|&&w| w > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateDistribution);
    }
    // Relative slack so that e.g. 0.5 + 0.3 reaches 0.8.
    let threshold = top_p * total * (1.0 - 1e-12);
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in ranked_indices(weights) {
        if weights[i] <= 0.0 {
            break;
        }
        kept.push(i);
        mass += weights[i];
        if mass >= threshold {
            break;
        }
    }
    Ok((kept, mass))
}

/// Renormalized nucleus distribution, zero outside the nucleus.
pub fn nucleus_filter(probs: &[f64], top_p: f64) -> Result<Vec<f64>> {
    let (kept, mass) = nucleus(probs, top_p)?;
    let mut out = vec![0.0; probs.len()];
    for i in kept {
        out[i] = probs[i] / mass;
    }
    Ok(out)
}

/// Samples from the nucleus of `weights`. Consumes exactly one `f64` draw.
pub fn nucleus_sample<R: Rng + ?Sized>(weights: &[f64], top_p: f64, rng: &mut R) -> Result<TokenId> {
    let (kept, mass) = nucleus(weights, top_p)?;
    let mut u = rng.gen::<f64>() * mass;
    for &i in &kept {
        if u < weights[i] {
            return Ok(i as TokenId);
        }
        u -= weights[i];
    }
    Ok(*kept.last().expect("nucleus is non-empty") as TokenId)
}

/// Ancestral sample over all positive entries in id order. Consumes exactly
/// one `f64` draw.
pub fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<TokenId> {
    let total: f64 = weights.iter().filter(|&&w| w > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateDistribution);
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return Ok(i as TokenId);
        }
        u -= w;
        last = i;
    }
    Ok(last as TokenId)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn temperature_examples() {
        let p = [0.1, 0.6, 0.3];
        assert_eq!(apply_temperature(&p, 1.0), p.to_vec());
        assert!(close(&apply_temperature(&[0.5, 0.5], 0.3), &[0.5, 0.5], 1e-15));
        let sharp = apply_temperature(&[0.8, 0.2], 0.5);
        assert!(close(&sharp, &[0.64 / 0.68, 0.04 / 0.68], 1e-12));
        assert!((sharp[0] - 0.9412).abs() < 1e-4);
    }

    #[test]
    fn top_k_examples() {
        assert!(close(&filter_top_k(&[0.1, 0.2, 0.3, 0.4], 2), &[0.0, 0.0, 3.0 / 7.0, 4.0 / 7.0], 1e-15));
        let p = [0.1, 0.2, 0.7];
        assert_eq!(filter_top_k(&p, 3), p.to_vec());
        assert_eq!(filter_top_k(&p, 50), p.to_vec());
        assert_eq!(filter_top_k(&[0.25; 4], 2), vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn nucleus_examples() {
        let f = nucleus_filter(&[0.5, 0.3, 0.15, 0.05], 0.8).unwrap();
        assert!(close(&f, &[0.625, 0.375, 0.0, 0.0], 1e-12));
        assert_eq!(nucleus_filter(&[0.0, 1.0, 0.0], 0.3).unwrap(), vec![0.0, 1.0, 0.0]);
        let full = nucleus_filter(&[0.4, 0.3, 0.2, 0.1], 1.0).unwrap();
        assert!(full.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn nucleus_on_unnormalized_weights() {
        let f = nucleus_filter(&[1.0, 0.6, 0.3, 0.1], 0.8).unwrap();
        assert!(close(&f, &[0.625, 0.375, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn degenerate_distribution_is_an_error() {
        let mut r = rng::seeded(0);
        assert!(matches!(nucleus_sample(&[0.0, 0.0], 0.9, &mut r), Err(Error::DegenerateDistribution)));
        assert!(nucleus_filter(&[], 0.9).is_err());
    }

    #[test]
    fn one_hot_always_sampled() {
        let mut r = rng::seeded(1);
        for _ in 0..200 {
            assert_eq!(nucleus_sample(&[0.0, 0.0, 1.0, 0.0], 0.5, &mut r).unwrap(), 2);
        }
    }
}
