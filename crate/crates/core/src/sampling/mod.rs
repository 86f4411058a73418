//! Distribution transforms, baseline samplers and entropy-aware sampling.

mod baseline;
mod eas;
mod filters;

pub use baseline::{
    baseline_topk_generate, topk_nucleus_generate, windowed_penalty_dist, windowed_penalty_generate,
    RasParams, RasSampler, TopKSampler,
};
pub use eas::{
    adjusted_scores, eas_generate, eas_penalties, eas_step, EasParams, EasSampler, EasState,
    MemoryEntry,
};
pub use filters::{
    apply_temperature, filter_top_k, nucleus_filter, nucleus_sample, ranked_indices, sample_weighted,
};

use rand::Rng;

use crate::armodel::NextTokenModel;
use crate::error::Result;
use crate::token::TokenId;

/// One autoregressive decoding rule with per-stream state.
///
/// Hierarchical decoding is generic over this so the same staged search
/// runs on top of either EAS or the windowed-penalty baseline.
pub trait StepSampler: Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn fresh_state(&self) -> Self::State;

    /// Draws the next token given the full context so far.
    fn step<M, R>(
        &self,
        model: &M,
        context: &[TokenId],
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<TokenId>
    where
        M: NextTokenModel + ?Sized,
        R: Rng + ?Sized;

    /// Appends `n` tokens to `context`, returning just the new ones.
    fn extend<M, R>(
        &self,
        model: &M,
        context: &mut Vec<TokenId>,
        n: usize,
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<Vec<TokenId>>
    where
        M: NextTokenModel + ?Sized,
        R: Rng + ?Sized,
    {
        let start = context.len();
        for _ in 0..n {
            let tok = self.step(model, context, state, rng)?;
            context.push(tok);
        }
        Ok(context[start..].to_vec())
    }
}
