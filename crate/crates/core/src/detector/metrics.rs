//! Detector evaluation metrics.

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::invalid("metrics need at least one example"));
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Area under the ROC curve via the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks over tie groups.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        pos_rank_sum += mid * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Standard deviation of AUROC under the label-permutation null (no ties).
pub fn auroc_null_std(n_pos: usize, n_neg: usize) -> f64 {
    let (p, n) = (n_pos as f64, n_neg as f64);
    ((p + n + 1.0) / (12.0 * p * n)).sqrt()
}

/// Fraction of examples whose thresholded prediction matches the label.
/// A score equal to the threshold counts as a positive prediction.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    check(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the positive-class and negative-class F1. A class
/// that is neither predicted nor present contributes 0.
pub fn macro_f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    check(scores, labels)?;
    let c = Confusion::at(scores, labels, threshold);
    let f_pos = f1(c.tp, c.fp, c.fn_);
    let f_neg = f1(c.tn, c.fn_, c.fp);
    Ok((f_pos + f_neg) / 2.0)
}

/// Mean binary cross-entropy of probability scores, clipped away from 0/1.
pub fn mean_bce(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    const EPS: f64 = 1e-15;
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            if l {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        let labels = [true, true, false, false];
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.8, 0.4, 0.6, 0.2], &labels).unwrap(), 0.75);
        assert_eq!(auroc(&[0.3; 4], &labels).unwrap(), 0.5);
    }

    #[test]
    fn auroc_needs_both_classes() {
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auroc(&[], &[]).is_err());
        assert!(auroc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn threshold_metrics_hand_case() {
        let labels = [true, true, false, false];
        let scores = [0.9, 0.4, 0.6, 0.1];
        assert_eq!(accuracy_at(&scores, &labels, 0.5).unwrap(), 0.5);
        assert_eq!(macro_f1_at(&scores, &labels, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn perfect_predictions() {
        let labels = [true, false, true];
        let scores = [0.7, 0.2, 0.99];
        assert_eq!(accuracy_at(&scores, &labels, 0.5).unwrap(), 1.0);
        assert_eq!(macro_f1_at(&scores, &labels, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn boundary_score_is_positive() {
        assert_eq!(accuracy_at(&[0.5], &[true], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy_at(&[0.5], &[false], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn absent_class_contributes_zero_f1() {
        // All negatives, all predicted negative: positive class F1 = 0.
        assert_eq!(macro_f1_at(&[0.1, 0.2], &[false, false], 0.5).unwrap(), 0.5);
    }

    #[test]
    fn bce_of_coin_flip() {
        let b = mean_bce(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert!((b - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
