//! Reference decoders: plain top-k sampling, top-k + nucleus sampling and
//! a windowed multiplicative repetition penalty (a RAS-style stand-in).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::filters::{apply_temperature, filter_top_k, nucleus_sample, sample_weighted};
use super::StepSampler;
use crate::armodel::NextTokenModel;
use crate::error::{Error, Result};
use crate::token::TokenId;

/// Ancestral sampling from the temperature- and top-k-filtered
/// distribution. With `top_p < 1` a nucleus cut is applied as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopKSampler {
    pub top_k: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for TopKSampler {
    fn default() -> Self {
        Self {
            top_k: 50,
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl TopKSampler {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || !(self.temperature > 0.0) || !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid(
                "top-k sampler needs top_k >= 1, temperature > 0 and top_p in (0, 1]",
            ));
        }
        Ok(())
    }
}

impl StepSampler for TopKSampler {
    type State = ();

    fn fresh_state(&self) {}

    fn step<M, R>(&self, model: &M, context: &[TokenId], _: &mut (), rng: &mut R) -> Result<TokenId>
    where
        M: NextTokenModel + ?Sized,
        R: Rng + ?Sized,
    {
        let probs = filter_top_k(&apply_temperature(&model.dist(context), self.temperature), self.top_k);
        if self.top_p < 1.0 {
            nucleus_sample(&probs, self.top_p, rng)
        } else {
            sample_weighted(&probs, rng)
        }
    }
}

pub fn baseline_topk_generate<M, R>(
    model: &M,
    prefix: &[TokenId],
    n_tokens: usize,
    top_k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<TokenId>>
where
    M: NextTokenModel + ?Sized,
    R: Rng + ?Sized,
{
    let sampler = TopKSampler {
        top_k,
        temperature,
        top_p: 1.0,
    };
    sampler.validate()?;
    sampler.extend(model, &mut prefix.to_vec(), n_tokens, &mut (), rng)
}

/// Temperature, top-k, then nucleus sampling; no penalties.
pub fn topk_nucleus_generate<M, R>(
    model: &M,
    prefix: &[TokenId],
    n_tokens: usize,
    top_k: usize,
    top_p: f64,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<TokenId>>
where
    M: NextTokenModel + ?Sized,
    R: Rng + ?Sized,
{
    let sampler = TopKSampler {
        top_k,
        temperature,
        top_p,
    };
    sampler.validate()?;
    sampler.extend(model, &mut prefix.to_vec(), n_tokens, &mut (), rng)
}

/// Windowed repetition penalty. Tokens seen among the last `window`
/// context tokens have their probability multiplied by `penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasParams {
    pub top_k: usize,
    pub top_p: f64,
    pub window: usize,
    pub penalty: f64,
    pub temperature: f64,
}

impl Default for RasParams {
    fn default() -> Self {
        Self {
            top_k: 50,
            top_p: 0.8,
            window: 25,
            penalty: 0.1,
            temperature: 1.0,
        }
    }
}

impl RasParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("repetition window must be at least 1"));
        }
        if !(self.penalty > 0.0 && self.penalty <= 1.0) {
            return Err(Error::invalid("repetition penalty must lie in (0, 1]"));
        }
        if self.top_k == 0 || !(self.top_p > 0.0 && self.top_p <= 1.0) || !(self.temperature > 0.0) {
            return Err(Error::invalid(
                "RAS-style sampler needs top_k >= 1, top_p in (0, 1], temperature > 0",
            ));
        }
        Ok(())
    }
}

/// Penalized, renormalized and top-k filtered distribution for one step.
/// The window is the tail of `context`, so it spans the prompt as well as
/// generated tokens.
pub fn windowed_penalty_dist(probs: &[f64], context: &[TokenId], params: &RasParams) -> Vec<f64> {
    let mut p = apply_temperature(probs, params.temperature);
    let start = context.len().saturating_sub(params.window);
    let mut seen = vec![false; p.len()];
    for &t in &context[start..] {
        if let Some(flag) = seen.get_mut(t as usize) {
            *flag = true;
        }
    }
    for (pi, &hit) in p.iter_mut().zip(&seen) {
        if hit {
            *pi *= params.penalty;
        }
    }
    let z: f64 = p.iter().sum();
    if z > 0.0 {
        p.iter_mut().for_each(|x| *x /= z);
    }
    filter_top_k(&p, params.top_k)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RasSampler(pub RasParams);

impl StepSampler for RasSampler {
    type State = ();

    fn fresh_state(&self) {}

    fn step<M, R>(&self, model: &M, context: &[TokenId], _: &mut (), rng: &mut R) -> Result<TokenId>
    where
        M: NextTokenModel + ?Sized,
        R: Rng + ?Sized,
    {
        let p = windowed_penalty_dist(&model.dist(context), context, &self.0);
        nucleus_sample(&p, self.0.top_p, rng)
    }
}

pub fn windowed_penalty_generate<M, R>(
    model: &M,
    prefix: &[TokenId],
    n_tokens: usize,
    params: &RasParams,
    rng: &mut R,
) -> Result<Vec<TokenId>>
where
    M: NextTokenModel + ?Sized,
    R: Rng + ?Sized,
{
    params.validate()?;
    RasSampler(*params).extend(model, &mut prefix.to_vec(), n_tokens, &mut (), rng)
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

    #[test]
    fn one_hot_forced_sequence() {
        let m = Fixed(vec![0.0, 1.0, 0.0]);
        let out = baseline_topk_generate(&m, &[], 20, 50, 1.0, &mut rng::seeded(4)).unwrap();
        assert_eq!(out, vec![1; 20]);
    }

    #[test]
    fn baseline_is_seeded() {
        let m = Fixed(vec![0.2, 0.3, 0.5]);
        let a = baseline_topk_generate(&m, &[0], 64, 2, 1.0, &mut rng::seeded(9)).unwrap();
        let b = baseline_topk_generate(&m, &[0], 64, 2, 1.0, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains(&0), "top-2 must exclude the least likely token");
    }

    #[test]
    fn penalty_scales_windowed_tokens() {
        let params = RasParams { window: 2, penalty: 0.1, ..RasParams::default() };
        let p = [0.5, 0.3, 0.2];
        // token 0 fell out of the window, token 2 is inside it
        let out = windowed_penalty_dist(&p, &[0, 1, 2], &params);
        let z = 0.5 + 0.1 * 0.3 + 0.1 * 0.2;
        assert!((out[0] - 0.5 / z).abs() < 1e-15);
        assert!((out[1] - 0.1 * 0.3 / z).abs() < 1e-15);
        assert!((out[2] - 0.1 * 0.2 / z).abs() < 1e-15);
    }

    #[test]
    fn unit_penalty_is_a_no_op() {
        let params = RasParams { penalty: 1.0, ..RasParams::default() };
        let p = [0.1, 0.2, 0.3, 0.4];
        let out = windowed_penalty_dist(&p, &[3, 3, 2], &params);
        assert!(out.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn zero_window_rejected() {
        let m = Fixed(vec![1.0]);
        let params = RasParams { window: 0, ..RasParams::default() };
        assert!(windowed_penalty_generate(&m, &[], 3, &params, &mut rng::seeded(0)).is_err());
    }
}
