//! Hierarchical sampling with progressive detector pruning.
//!
//! After a warmup, decoding proceeds in rounds. Each round spawns `B0`
//! candidate chunks of `L1` tokens, keeps the `B1` best under the 10-token
//! detector, extends the survivors to `L2` tokens, keeps the `B2` best under
//! the 25-token detector, extends those to `L3` tokens and finally picks one
//! by aggregating the ranks given by the 50-token detector and its two
//! skip-sampled variants. The winning chunk is appended and its sampler
//! state carries into the next round.
//!
//! Detectors only ever see the current round's chunk, never accepted
//! history. Each beam owns an independent random stream derived from the
//! round seed and its spawn index, so the output does not depend on how
//! beams are scheduled across threads.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::armodel::NextTokenModel;
use crate::detector::{DetectorBank, SegmentDetector};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::sampling::{EasParams, EasSampler, StepSampler};
use crate::token::{skip_sample, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierParams {
    pub warmup_len: usize,
    /// `(L1, L2, L3)`, strictly increasing.
    pub stage_lens: [usize; 3],
    /// `(B0, B1, B2)`, non-increasing.
    pub beams: [usize; 3],
    /// Total generated tokens, warmup included.
    pub max_len: usize,
    /// `(w50, w25, w10)`.
    pub rank_weights: [f64; 3],
    pub eas: EasParams,
}

impl Default for HierParams {
    fn default() -> Self {
        Self {
            warmup_len: 20,
            stage_lens: [10, 25, 50],
            beams: [8, 5, 3],
            max_len: 200,
            rank_weights: [1.0 / 3.0; 3],
            eas: EasParams::default(),
        }
    }
}

impl HierParams {
    pub fn validate(&self) -> Result<()> {
        let [l1, l2, l3] = self.stage_lens;
        if !(l1 >= 1 && l1 < l2 && l2 < l3) {
            return Err(Error::invalid(format!(
                "stage lengths must be strictly increasing and positive, got {:?}",
                self.stage_lens
            )));
        }
        let [b0, b1, b2] = self.beams;
        if !(b2 >= 1 && b1 >= b2 && b0 >= b1) {
            return Err(Error::invalid(format!(
                "beam counts must satisfy B0 >= B1 >= B2 >= 1, got {:?}",
                self.beams
            )));
        }
        if self.rank_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.rank_weights.iter().all(|&w| w == 0.0)
        {
            return Err(Error::invalid("rank weights must be non-negative and not all zero"));
        }
        if self.max_len == 0 || self.max_len < self.warmup_len {
            return Err(Error::invalid(format!(
                "max_len ({}) must be positive and at least warmup_len ({})",
                self.max_len, self.warmup_len
            )));
        }
        self.eas.validate()
    }

    /// Checks that detector input lengths line up with the stage lengths.
    pub fn check_bank<D: SegmentDetector>(&self, bank: &DetectorBank<D>) -> Result<()> {
        bank.validate()?;
        let [l1, l2, l3] = self.stage_lens;
        let checks = [
            ("m10", bank.m10.spec().window(), l1),
            ("m25", bank.m25.spec().window(), l2),
            ("m50", bank.m50.spec().window(), l3),
            ("m50_25", bank.m50_25.spec().window(), l3),
            ("m50_10", bank.m50_10.spec().window(), l3),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::invalid(format!(
                    "detector {name} covers {got} tokens but its stage length is {want}"
                )));
            }
        }
        Ok(())
    }
}

/// One in-flight hypothesis.
#[derive(Debug, Clone)]
pub struct Beam<S> {
    /// Spawn index within the round.
    pub id: usize,
    /// Accepted context followed by this beam's chunk.
    context: Vec<TokenId>,
    chunk_start: usize,
    pub state: S,
    rng: StreamRng,
    pub stream_seed: u64,
    pub last_score: Option<f64>,
}

impl<S> Beam<S> {
    /// Tokens generated in the current round.
    pub fn chunk(&self) -> &[TokenId] {
        &self.context[self.chunk_start..]
    }
}

/// `b0` beams sharing `context` and a clone of `shared_state`, each extended
/// by `len` tokens on stream `(root_seed, index)`.
pub fn spawn_candidates<M, S>(
    model: &M,
    context: &[TokenId],
    shared_state: &S::State,
    b0: usize,
    len: usize,
    sampler: &S,
    root_seed: u64,
) -> Result<Vec<Beam<S::State>>>
where
    M: NextTokenModel + ?Sized,
    S: StepSampler,
{
    (0..b0)
        .into_par_iter()
        .map(|id| {
            let mut beam = Beam {
                id,
                context: context.to_vec(),
                chunk_start: context.len(),
                state: shared_state.clone(),
                rng: rng::stream(root_seed, id as u64),
                stream_seed: root_seed,
                last_score: None,
            };
            sampler.extend(model, &mut beam.context, len, &mut beam.state, &mut beam.rng)?;
            Ok(beam)
        })
        .collect()
}

/// Grows every chunk by `delta` tokens, continuing each beam's own state
/// and stream.
pub fn extend<M, S>(beams: &mut [Beam<S::State>], model: &M, delta: usize, sampler: &S) -> Result<()>
where
    M: NextTokenModel + ?Sized,
    S: StepSampler,
{
    beams.par_iter_mut().try_for_each(|beam| {
        sampler
            .extend(model, &mut beam.context, delta, &mut beam.state, &mut beam.rng)
            .map(|_| ())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub chunk_len: usize,
    /// `(beam id, score)` in the order beams entered the stage.
    pub scores: Vec<(usize, f64)>,
    /// Surviving beam ids, best first.
    pub kept: Vec<usize>,
    /// True when the chunk length did not match the detector and no
    /// pruning happened.
    pub pass_through: bool,
}

/// Keeps the `keep_n` best-scoring beams, best first. Equal scores keep
/// their incoming order.
pub fn prune<S, D>(beams: Vec<Beam<S>>, detector: &D, keep_n: usize) -> Result<(Vec<Beam<S>>, StageLog)>
where
    S: Send + Sync,
    D: SegmentDetector + ?Sized,
{
    if keep_n == 0 || keep_n > beams.len() {
        return Err(Error::invalid(format!(
            "cannot keep {keep_n} of {} beams",
            beams.len()
        )));
    }
    let chunk_len = beams[0].chunk().len();
    let scores: Vec<f64> = beams
        .par_iter()
        .map(|b| detector.score(b.chunk()))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..beams.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(keep_n);

    let log = StageLog {
        chunk_len,
        scores: beams.iter().zip(&scores).map(|(b, &s)| (b.id, s)).collect(),
        kept: order.iter().map(|&i| beams[i].id).collect(),
        pass_through: false,
    };
    let mut slots: Vec<Option<Beam<S>>> = beams.into_iter().map(Some).collect();
    let kept = order
        .into_iter()
        .map(|i| {
            let mut b = slots[i].take().expect("each index kept once");
            b.last_score = Some(scores[i]);
            b
        })
        .collect();
    Ok((kept, log))
}

fn pass_through<S>(beams: &[Beam<S>]) -> StageLog {
    StageLog {
        chunk_len: beams.first().map_or(0, |b| b.chunk().len()),
        scores: Vec::new(),
        kept: beams.iter().map(|b| b.id).collect(),
        pass_through: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAggregate {
    pub r50: Vec<f64>,
    pub r25: Vec<f64>,
    pub r10: Vec<f64>,
    pub aggregate: Vec<f64>,
    pub best: usize,
}

/// Fractional ranks: 1 for the highest score, tied scores share the mean
/// of the positions they cover.
pub fn fractional_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mean = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = mean;
        }
        i = j;
    }
    ranks
}

/// Weighted rank sum `R = w50*r50 + w25*r25 + w10*r10`; the best candidate
/// minimizes `R`, then has the higher `s50`, then the lower index.
pub fn aggregate_ranks(s50: &[f64], s25: &[f64], s10: &[f64], weights: [f64; 3]) -> Result<RankAggregate> {
    if s50.is_empty() || s50.len() != s25.len() || s50.len() != s10.len() {
        return Err(Error::invalid(format!(
            "score lists must be equal-length and non-empty, got {}, {}, {}",
            s50.len(),
            s25.len(),
            s10.len()
        )));
    }
    let (r50, r25, r10) = (fractional_ranks(s50), fractional_ranks(s25), fractional_ranks(s10));
    let [w50, w25, w10] = weights;
    let aggregate: Vec<f64> = (0..s50.len())
        .map(|i| w50 * r50[i] + w25 * r25[i] + w10 * r10[i])
        .collect();
    let best = (0..s50.len())
        .min_by(|&a, &b| {
            aggregate[a]
                .total_cmp(&aggregate[b])
                .then(s50[b].total_cmp(&s50[a]))
                .then(a.cmp(&b))
        })
        .expect("non-empty");
    Ok(RankAggregate { r50, r25, r10, aggregate, best })
}

/// Scores full-length chunks with the 50-token detector and its two
/// skip-sampled variants.
pub fn final_stage_scores<S, D>(beams: &[Beam<S>], bank: &DetectorBank<D>) -> Result<[Vec<f64>; 3]>
where
    S: Sync,
    D: SegmentDetector,
{
    let rows: Vec<[f64; 3]> = beams
        .par_iter()
        .map(|b| {
            let chunk = b.chunk();
            let (w25, w10) = (bank.m50_25.spec(), bank.m50_10.spec());
            if chunk.len() != bank.m50.spec().length || chunk.len() != w25.window() || chunk.len() != w10.window() {
                return Err(Error::LengthMismatch {
                    expected: bank.m50.spec().length,
                    actual: chunk.len(),
                });
            }
            Ok([
                bank.m50.score(chunk)?,
                bank.m50_25.score(&skip_sample(chunk, w25.stride))?,
                bank.m50_10.score(&skip_sample(chunk, w10.stride))?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok([
        rows.iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| r[1]).collect(),
        rows.iter().map(|r| r[2]).collect(),
    ])
}

/// Scores for a clipped final round. A slot whose detector cannot be fed
/// from the chunk's trailing window gets weight 0 and constant scores.
fn tail_stage_scores<S, D>(beams: &[Beam<S>], bank: &DetectorBank<D>, weights: [f64; 3]) -> Result<([Vec<f64>; 3], [f64; 3])>
where
    D: SegmentDetector,
{
    let len = beams[0].chunk().len();
    fn pick<D: SegmentDetector>(candidates: [&D; 2], len: usize) -> Option<&D> {
        candidates.into_iter().find(|d| d.spec().window() <= len)
    }
    let slots = [
        pick([&bank.m50, &bank.m50], len),
        pick([&bank.m50_25, &bank.m25], len),
        pick([&bank.m50_10, &bank.m10], len),
    ];
    let mut scores: [Vec<f64>; 3] = Default::default();
    let mut used = [0.0; 3];
    for (k, slot) in slots.iter().enumerate() {
        match slot {
            Some(det) => {
                let spec = det.spec();
                scores[k] = beams
                    .iter()
                    .map(|b| {
                        let c = b.chunk();
                        det.score(&skip_sample(&c[c.len() - spec.window()..], spec.stride))
                    })
                    .collect::<Result<_>>()?;
                used[k] = weights[k];
            }
            None => scores[k] = vec![0.0; beams.len()],
        }
    }
    Ok((scores, used))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalLog {
    pub beam_ids: Vec<usize>,
    pub s50: Vec<f64>,
    pub s25: Vec<f64>,
    pub s10: Vec<f64>,
    pub weights: [f64; 3],
    pub ranks: Option<RankAggregate>,
}

/// Everything that happened in one decoding round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub round_seed: u64,
    pub stage_lens: [usize; 3],
    pub spawned: usize,
    pub stage1: StageLog,
    pub stage2: StageLog,
    pub final_stage: FinalLog,
    pub chosen: usize,
    pub appended: usize,
}

impl RoundLog {
    /// Beam counts entering stage 1, stage 2 and final selection.
    pub fn trajectory(&self) -> [usize; 3] {
        [self.spawned, self.stage1.kept.len(), self.stage2.kept.len()]
    }

    /// Stage-1 score of the chosen beam, if stage 1 was scored.
    pub fn chosen_stage1_score(&self) -> Option<f64> {
        self.stage1
            .scores
            .iter()
            .find(|(id, _)| *id == self.chosen)
            .map(|&(_, s)| s)
    }
}

pub fn write_round_logs<W: Write>(mut out: W, logs: &[RoundLog]) -> Result<()> {
    for log in logs {
        serde_json::to_writer(&mut out, log)?;
        out.write_all(b"\n").map_err(|e| Error::io("<round log>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HierOutput<S> {
    /// Generated tokens (warmup included), exactly `max_len` of them.
    pub tokens: Vec<TokenId>,
    pub logs: Vec<RoundLog>,
    pub final_state: S,
}

/// Generates `params.warmup_len` tokens with `sampler` after `prefix`.
pub fn warmup<M, S, R>(
    model: &M,
    prefix: &[TokenId],
    len: usize,
    sampler: &S,
    state: &mut S::State,
    rng: &mut R,
) -> Result<Vec<TokenId>>
where
    M: NextTokenModel + ?Sized,
    S: StepSampler,
    R: Rng + ?Sized,
{
    let mut context = prefix.to_vec();
    sampler.extend(model, &mut context, len, state, rng)
}

/// Hierarchical decoding on top of entropy-aware sampling.
pub fn hier_generate<M, D, R>(
    model: &M,
    bank: &DetectorBank<D>,
    prefix: &[TokenId],
    params: &HierParams,
    rng: &mut R,
) -> Result<HierOutput<crate::sampling::EasState>>
where
    M: NextTokenModel + ?Sized,
    D: SegmentDetector,
    R: Rng + ?Sized,
{
    hier_generate_with(model, bank, prefix, params, &EasSampler(params.eas), rng)
}

/// Hierarchical decoding with any step sampler. The warmup consumes `rng`
/// directly; each round then draws one `u64` round seed from it.
pub fn hier_generate_with<M, D, S, R>(
    model: &M,
    bank: &DetectorBank<D>,
    prefix: &[TokenId],
    params: &HierParams,
    sampler: &S,
    rng: &mut R,
) -> Result<HierOutput<S::State>>
where
    M: NextTokenModel + ?Sized,
    D: SegmentDetector,
    S: StepSampler,
    R: Rng + ?Sized,
{
    params.validate()?;
    params.check_bank(bank)?;
    let [l1, l2, l3] = params.stage_lens;
    let [b0, b1, b2] = params.beams;

    let mut state = sampler.fresh_state();
    let mut context = prefix.to_vec();
    sampler.extend(model, &mut context, params.warmup_len, &mut state, rng)?;
    let mut generated = params.warmup_len;
    let mut logs = Vec::new();

    while generated < params.max_len {
        let remaining = params.max_len - generated;
        let lens = [l1.min(remaining), l2.min(remaining), l3.min(remaining)];
        let round_seed: u64 = rng.gen();

        let beams = spawn_candidates(model, &context, &state, b0, lens[0], sampler, round_seed)?;

        let (mut beams, stage1) = if lens[0] == bank.m10.spec().length {
            prune(beams, &bank.m10, b1)?
        } else {
            let log = pass_through(&beams);
            (beams, log)
        };
        if lens[1] > lens[0] {
            extend(&mut beams, model, lens[1] - lens[0], sampler)?;
        }
        let (mut beams, stage2) = if lens[1] == bank.m25.spec().length {
            prune(beams, &bank.m25, b2)?
        } else {
            let log = pass_through(&beams);
            (beams, log)
        };
        if lens[2] > lens[1] {
            extend(&mut beams, model, lens[2] - lens[1], sampler)?;
        }

        let full = lens[2] == l3;
        let (scores, weights) = if full {
            (final_stage_scores(&beams, bank)?, params.rank_weights)
        } else {
            tail_stage_scores(&beams, bank, params.rank_weights)?
        };
        let [s50, s25, s10] = scores;
        let ranks = if weights.iter().any(|&w| w > 0.0) {
            Some(aggregate_ranks(&s50, &s25, &s10, weights)?)
        } else {
            None
        };
        let pos = ranks.as_ref().map_or(0, |r| r.best);
        let winner = beams.swap_remove(pos);
        let final_stage = FinalLog {
            beam_ids: {
                let mut ids: Vec<usize> = beams.iter().map(|b| b.id).collect();
                ids.push(winner.id);
                let last = ids.len() - 1;
                ids.swap(pos, last);
                ids
            },
            s50,
            s25,
            s10,
            weights,
            ranks,
        };

        let chunk = winner.chunk().to_vec();
        logs.push(RoundLog {
            round: logs.len(),
            round_seed,
            stage_lens: lens,
            spawned: b0,
            stage1,
            stage2,
            final_stage,
            chosen: winner.id,
            appended: chunk.len(),
        });
        generated += chunk.len();
        context.extend_from_slice(&chunk);
        state = winner.state;
    }

    let mut tokens = context.split_off(prefix.len());
    tokens.truncate(params.max_len);
    Ok(HierOutput {
        tokens,
        logs,
        final_state: state,
    })
}
