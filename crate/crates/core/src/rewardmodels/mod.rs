//! Rewards for a simplification rollout: SARI-based simplicity, relevance
//! from a sequence auto-encoder and fluency from an LSTM language model,
//! combined as `λ_S r_S + λ_R r_R + λ_F r_F`.

mod lm;
mod sae;
mod simplicity;

pub use lm::{fluency_reward, lm_epoch, perplexity, step_log_probs, train_lm, LmLayout, LmParams};
pub use sae::{
    cosine, relevance_from_vectors, relevance_reward, sae_encode, sae_epoch, sae_loss, sae_reconstruct, train_sae,
    SaeLayout, SaeParams,
};
pub use simplicity::simplicity_reward;

use crate::error::{DressError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub lambda_s: f64,
    pub lambda_r: f64,
    pub lambda_f: f64,
    pub beta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lambda_s: 1.0,
            lambda_r: 0.25,
            lambda_f: 0.5,
            beta: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_r", self.lambda_r),
            ("lambda_f", self.lambda_f),
            ("beta", self.beta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DressError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub r_s: f64,
    pub r_r: f64,
    pub r_f: f64,
    pub total: f64,
}

pub fn composite_reward(weights: &RewardWeights, r_s: f64, r_r: f64, r_f: f64) -> Result<RewardBreakdown> {
    weights.validate()?;
    for (name, v) in [("r_s", r_s), ("r_r", r_r), ("r_f", r_f)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(DressError::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(RewardBreakdown {
        r_s,
        r_r,
        r_f,
        total: weights.lambda_s * r_s + weights.lambda_r * r_r + weights.lambda_f * r_f,
    })
}

/// Everything needed to score a rollout.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub sae: &'a SaeParams,
    pub lm: &'a LmParams,
    pub weights: RewardWeights,
}

impl RewardContext<'_> {
    /// Score `output` (ids, no EOS) for `source` against `reference`.
    /// An empty output scores zero on every component.
    pub fn score(&self, source: &[usize], output: &[usize], reference: &[usize]) -> Result<RewardBreakdown> {
        if output.is_empty() {
            return Ok(RewardBreakdown::default());
        }
        let r_s = simplicity_reward(source, output, reference, self.weights.beta)?;
        let r_r = relevance_reward(self.sae, source, output)?;
        let r_f = fluency_reward(self.lm, output)?;
        composite_reward(&self.weights, r_s, r_r, r_f)
    }
}
