//! Entropy-aware sampling.
//!
//! A memory buffer records the tokens that were competitive at recent
//! steps together with their rank and age. Each remembered token is
//! penalized by `alpha / (1 + rank) * beta^age`, summed over its entries
//! and capped at `gamma`. The penalties are subtracted from the filtered
//! next-token distribution before nucleus sampling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::filters::{apply_temperature, filter_top_k, nucleus_sample, ranked_indices};
use super::StepSampler;
use crate::armodel::NextTokenModel;
use crate::error::{Error, Result};
use crate::token::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EasParams {
    /// Penalty scale.
    pub alpha: f64,
    /// Per-step decay of remembered entries, in (0, 1].
    pub beta: f64,
    /// Cap on the total penalty of one token.
    pub gamma: f64,
    /// Number of top-ranked tokens remembered at each step.
    pub cluster_k: usize,
    /// Maximum age of a memory entry.
    pub window: usize,
    pub top_p: f64,
    pub top_k: usize,
    pub temperature: f64,
}

impl Default for EasParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.7,
            gamma: 0.8,
            cluster_k: 3,
            window: 15,
            top_p: 0.8,
            top_k: 50,
            temperature: 1.0,
        }
    }
}

impl EasParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("EAS parameters: {m}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be >= 0");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if self.cluster_k == 0 || self.window == 0 || self.top_k == 0 {
            return bad("cluster_k, window and top_k must be positive");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub token: TokenId,
    /// 1 = most probable at insertion time.
    pub rank: usize,
    pub age: usize,
}

/// The decaying candidate memory. Owned by a single decoding stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EasState {
    pub entries: Vec<MemoryEntry>,
}

impl EasState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ages every entry by one step and drops those older than `window`.
    fn age(&mut self, window: usize) {
        self.entries.retain_mut(|e| {
            e.age += 1;
            e.age <= window
        });
    }
}

/// Per-token penalty for every token present in memory.
pub fn eas_penalties(state: &EasState, params: &EasParams) -> BTreeMap<TokenId, f64> {
    let mut raw: BTreeMap<TokenId, f64> = BTreeMap::new();
    for e in &state.entries {
        let term = params.alpha * (1.0 / (1.0 + e.rank as f64)) * params.beta.powi(e.age as i32);
        *raw.entry(e.token).or_insert(0.0) += term;
    }
    raw.values_mut().for_each(|p| *p = p.min(params.gamma));
    raw
}

/// Filtered model distribution minus penalties, clamped at zero. Falls back
/// to the unpenalized distribution if nothing positive survives. The result
/// is not renormalized; nucleus sampling scales by its total.
pub fn adjusted_scores(filtered: &[f64], penalties: &BTreeMap<TokenId, f64>) -> Vec<f64> {
    let mut out = filtered.to_vec();
    for (&tok, &pen) in penalties {
        if let Some(s) = out.get_mut(tok as usize) {
            *s = (*s - pen).max(0.0);
        }
    }
    if out.iter().any(|&s| s > 0.0) {
        out
    } else {
        filtered.to_vec()
    }
}

/// One EAS step: sample a token and update `state` in place.
pub fn eas_step<M, R>(
    model: &M,
    prefix: &[TokenId],
    state: &mut EasState,
    params: &EasParams,
    rng: &mut R,
) -> Result<TokenId>
where
    M: NextTokenModel + ?Sized,
    R: Rng + ?Sized,
{
    let probs = model.dist(prefix);
    let filtered = filter_top_k(&apply_temperature(&probs, params.temperature), params.top_k);
    let penalties = eas_penalties(state, params);
    let adjusted = adjusted_scores(&filtered, &penalties);
    let token = nucleus_sample(&adjusted, params.top_p, rng)?;

    state.age(params.window);
    let mut cluster: Vec<TokenId> = ranked_indices(&adjusted)
        .into_iter()
        .take_while(|&i| adjusted[i] > 0.0)
        .take(params.cluster_k)
        .map(|i| i as TokenId)
        .collect();
    if !cluster.contains(&token) {
        cluster.push(token);
    }
    state
        .entries
        .extend(cluster.into_iter().enumerate().map(|(i, tok)| MemoryEntry {
            token: tok,
            rank: i + 1,
            age: 0,
        }));
    Ok(token)
}

/// Runs `n_tokens` EAS steps after `prefix`, starting from `state` or an
/// empty memory.
pub fn eas_generate<M, R>(
    model: &M,
    prefix: &[TokenId],
    n_tokens: usize,
    params: &EasParams,
    rng: &mut R,
    state: Option<EasState>,
) -> Result<(Vec<TokenId>, EasState)>
where
    M: NextTokenModel + ?Sized,
    R: Rng + ?Sized,
{
    params.validate()?;
    let mut state = state.unwrap_or_default();
    let mut context = prefix.to_vec();
    let out = EasSampler(*params).extend(model, &mut context, n_tokens, &mut state, rng)?;
    Ok((out, state))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EasSampler(pub EasParams);

impl StepSampler for EasSampler {
    type State = EasState;

    fn fresh_state(&self) -> EasState {
        EasState::new()
    }

    fn step<M, R>(&self, model: &M, context: &[TokenId], state: &mut EasState, rng: &mut R) -> Result<TokenId>
    where
        M: NextTokenModel + ?Sized,
        R: Rng + ?Sized,
    {
        eas_step(model, context, state, &self.0, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    struct Fixed(Vec<f64>);

    impl NextTokenModel for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn dist(&self, _: &[TokenId]) -> Vec<f64> {
            self.0.clone()
        }
    }

    fn entry(token: TokenId, rank: usize, age: usize) -> MemoryEntry {
        MemoryEntry { token, rank, age }
    }

    #[test]
    fn empty_memory_no_penalty() {
        assert!(eas_penalties(&EasState::new(), &EasParams::default()).is_empty());
    }

    #[test]
    fn single_entry_penalty() {
        let st = EasState { entries: vec![entry(4, 1, 2)] };
        let p = eas_penalties(&st, &EasParams::default());
        assert!((p[&4] - 0.049).abs() < 1e-12);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn summed_and_capped_penalties() {
        let st = EasState { entries: vec![entry(1, 1, 0), entry(1, 2, 1)] };
        let p = eas_penalties(&st, &EasParams::default());
        assert!((p[&1] - (0.1 + 0.2 / 3.0 * 0.7)).abs() < 1e-12);
        let st = EasState { entries: vec![entry(1, 1, 0); 30] };
        assert_eq!(eas_penalties(&st, &EasParams::default())[&1], 0.8);
    }

    #[test]
    fn forced_token_and_memory_contents() {
        let model = Fixed(vec![0.0, 0.0, 1.0, 0.0]);
        let mut st = EasState::new();
        let tok = eas_step(&model, &[], &mut st, &EasParams::default(), &mut rng::seeded(0)).unwrap();
        assert_eq!(tok, 2);
        // Only one token has positive mass, so the cluster is just {2}.
        assert_eq!(st.entries, vec![entry(2, 1, 0)]);
    }

    #[test]
    fn sampled_token_appended_when_outside_cluster() {
        let params = EasParams { cluster_k: 1, top_p: 1.0, ..EasParams::default() };
        let model = Fixed(vec![0.5, 0.5]);
        let mut r = rng::seeded(2);
        for _ in 0..50 {
            let mut st = EasState::new();
            let tok = eas_step(&model, &[], &mut st, &params, &mut r).unwrap();
            if tok == 0 {
                assert_eq!(st.entries, vec![entry(0, 1, 0)]);
            } else {
                assert_eq!(st.entries, vec![entry(0, 1, 0), entry(1, 2, 0)]);
            }
        }
    }

    #[test]
    fn ageing_happens_before_insertion() {
        let params = EasParams { window: 2, ..EasParams::default() };
        let model = Fixed(vec![1.0, 0.0]);
        let mut st = EasState { entries: vec![entry(1, 1, 1), entry(1, 2, 2)] };
        eas_step(&model, &[], &mut st, &params, &mut rng::seeded(0)).unwrap();
        assert_eq!(st.entries, vec![entry(1, 1, 2), entry(0, 1, 0)]);
    }

    #[test]
    fn clamped_scores_fall_back_when_empty() {
        let mut pen = BTreeMap::new();
        pen.insert(0, 0.9);
        assert_eq!(adjusted_scores(&[0.4, 0.6], &pen), vec![0.0, 0.6]);
        pen.insert(1, 0.9);
        assert_eq!(adjusted_scores(&[0.4, 0.6], &pen), vec![0.4, 0.6]);
    }

    #[test]
    fn invalid_params_rejected() {
        let model = Fixed(vec![1.0]);
        let params = EasParams { beta: 0.0, ..EasParams::default() };
        assert!(eas_generate(&model, &[], 1, &params, &mut rng::seeded(0), None).is_err());
    }
}
