//! Speculative decoding with a drafter and a target model.
//!
//! Per round the drafter proposes `gamma` tokens autoregressively. The target
//! checks them in order, accepting token `x` with probability
//! `min(1, p(x) / q(x))`. At the first rejection a replacement is drawn from
//! the normalized residual `max(0, p - q)` and the remaining drafts are
//! discarded; if every draft passes, one bonus token is drawn from the
//! target. Emitted tokens are therefore distributed exactly as the target.
//!
//! Random draws per round, in order: `gamma` drafter samples, one uniform per
//! verified draft, then one draw for the residual or bonus token.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::NGramModel;
use crate::prob::{sample, ProbVector, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecSimConfig {
    pub gamma: usize,
    pub rounds: usize,
    /// Drafter cost relative to one target evaluation.
    pub cost_ratio: f64,
    /// Generated text is trimmed to this many trailing tokens.
    pub max_context: usize,
}

impl Default for SpecSimConfig {
    fn default() -> Self {
        Self {
            gamma: 4,
            rounds: 10_000,
            cost_ratio: 0.1,
            max_context: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSimReport {
    /// Accepted drafts over drafts that reached verification.
    pub acceptance_rate: f64,
    pub accepted_tokens_per_round: f64,
    pub tokens_per_round: f64,
    /// `tokens_per_round / (1 + cost_ratio * gamma)`, an analytical estimate.
    pub speedup_estimate: f64,
    pub gamma: usize,
    pub rounds: usize,
    pub cost_ratio: f64,
    pub verified_drafts: u64,
    pub accepted_drafts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub emitted: Vec<TokenId>,
    pub accepted: usize,
    pub verified: usize,
}

fn residual(p: &ProbVector, q: &ProbVector) -> Result<ProbVector> {
    let r: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).max(0.0)).collect();
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        return Ok(p.clone());
    }
    ProbVector::new(r.into_iter().map(|x| x / total).collect())
}

/// One draft-and-verify round continuing `context`.
pub fn speculative_round<R: Rng + ?Sized>(
    drafter: &NGramModel,
    target: &NGramModel,
    context: &[TokenId],
    gamma: usize,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let mut ctx = context.to_vec();
    let mut drafts = Vec::with_capacity(gamma);
    let mut draft_dists = Vec::with_capacity(gamma);
    for _ in 0..gamma {
        let q = drafter.predict(&ctx)?;
        let x = sample(&q, rng);
        drafts.push(x);
        draft_dists.push(q);
        ctx.push(x);
    }
    ctx.truncate(context.len());
    let mut emitted = Vec::with_capacity(gamma + 1);
    for (x, q) in drafts.iter().zip(&draft_dists) {
        let p = target.predict(&ctx)?;
        let u: f64 = rng.random();
        // q(x) > 0 because x was drawn from q
        if u < (p.get(*x) / q.get(*x)).min(1.0) {
            emitted.push(*x);
            ctx.push(*x);
        } else {
            let verified = emitted.len() + 1;
            let accepted = emitted.len();
            emitted.push(sample(&residual(&p, q)?, rng));
            return Ok(RoundOutcome {
                emitted,
                accepted,
                verified,
            });
        }
    }
    let bonus = sample(&target.predict(&ctx)?, rng);
    emitted.push(bonus);
    Ok(RoundOutcome {
        emitted,
        accepted: gamma,
        verified: gamma,
    })
}

/// Runs `cfg.rounds` rounds, cycling over `prompts`; each prompt keeps its own
/// running text.
pub fn spec_decode_sim<R: Rng + ?Sized>(
    drafter: &NGramModel,
    target: &NGramModel,
    prompts: &[Vec<TokenId>],
    cfg: &SpecSimConfig,
    rng: &mut R,
) -> Result<SpecSimReport> {
    if cfg.gamma == 0 {
        return param("gamma must be at least 1");
    }
    if cfg.rounds == 0 || prompts.is_empty() {
        return param("need at least one round and one prompt");
    }
    if !(cfg.cost_ratio >= 0.0 && cfg.cost_ratio.is_finite()) {
        return param("cost_ratio must be nonnegative");
    }
    if drafter.vocab_size() != target.vocab_size() {
        return param("drafter and target vocabularies differ");
    }
    let mut texts: Vec<Vec<TokenId>> = prompts.to_vec();
    let (mut verified, mut accepted, mut emitted) = (0u64, 0u64, 0u64);
    for round in 0..cfg.rounds {
        let text = &mut texts[round % prompts.len()];
        let out = speculative_round(drafter, target, text, cfg.gamma, rng)?;
        verified += out.verified as u64;
        accepted += out.accepted as u64;
        emitted += out.emitted.len() as u64;
        text.extend(out.emitted);
        if text.len() > cfg.max_context {
            text.drain(..text.len() - cfg.max_context);
        }
    }
    let rounds = cfg.rounds as f64;
    let tokens_per_round = emitted as f64 / rounds;
    Ok(SpecSimReport {
        acceptance_rate: accepted as f64 / verified as f64,
        accepted_tokens_per_round: accepted as f64 / rounds,
        tokens_per_round,
        speedup_estimate: tokens_per_round / (1.0 + cfg.cost_ratio * cfg.gamma as f64),
        gamma: cfg.gamma,
        rounds: cfg.rounds,
        cost_ratio: cfg.cost_ratio,
        verified_drafts: verified,
        accepted_drafts: accepted,
    })
}
