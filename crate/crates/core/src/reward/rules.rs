//! Rule-based external rewards: citation recall, substring correctness,
//! a length cost, and their weighted total.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::context::Rollout;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Weights of the combined rule reward
/// `total = alpha * cite + beta * acc - eta * cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    #[serde(default = "default_half")]
    pub alpha: f64,
    #[serde(default = "default_half")]
    pub beta: f64,
    #[serde(default)]
    pub eta: f64,
}

fn default_half() -> f64 {
    0.5
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5, eta: 0.0 }
    }
}

/// Recall of citation markers: the fraction of supporting documents whose
/// `CITE(i)` token occurs anywhere in the rollout. Marker multiplicity and
/// position are irrelevant.
pub fn citation_reward(
    rollout: &Rollout,
    supporting_ids: &[u32],
    vocab: &Vocabulary,
) -> Result<f64> {
    if supporting_ids.is_empty() {
        return Err(Error::EmptySupportingSet);
    }
    let present: HashSet<TokenId> = rollout.tokens.iter().copied().collect();
    let mut hits = 0usize;
    for &id in supporting_ids {
        if present.contains(&vocab.cite(id)?) {
            hits += 1;
        }
    }
    Ok(hits as f64 / supporting_ids.len() as f64)
}

/// Removes every maximal span between a `THINK_OPEN` and its matching
/// `THINK_CLOSE`. An unmatched `THINK_OPEN` strips to the end of the
/// sequence; a stray `THINK_CLOSE` outside any span is kept as an
/// ordinary token.
pub fn strip_think_spans(tokens: &[TokenId], vocab: &Vocabulary) -> Vec<TokenId> {
    let open = vocab.think_open();
    let close = vocab.think_close();
    let mut out = Vec::with_capacity(tokens.len());
    let mut depth = 0usize;
    for &tok in tokens {
        if tok == open {
            depth += 1;
        } else if tok == close && depth > 0 {
            depth -= 1;
        } else if depth == 0 {
            out.push(tok);
        }
    }
    out
}

/// Binary correctness: 1 iff the answer occurs as a contiguous
/// subsequence of the rollout after think-span stripping.
pub fn correctness_reward(rollout: &Rollout, answer: &[TokenId], vocab: &Vocabulary) -> Result<u8> {
    if answer.is_empty() {
        return Err(Error::InvalidTaskSpec("answer must be non-empty".into()));
    }
    let visible = strip_think_spans(&rollout.tokens, vocab);
    let hit = visible.windows(answer.len()).any(|w| w == answer);
    Ok(u8::from(hit))
}

/// Length regularizer: the token count `T`.
pub fn cost(rollout: &Rollout) -> f64 {
    rollout.len() as f64
}

/// Weighted combination of the rule rewards.
pub fn total_reward(r_cite: f64, r_acc: u8, rollout: &Rollout, config: &RuleConfig) -> f64 {
    config.alpha * r_cite + config.beta * f64::from(r_acc) - config.eta * cost(rollout)
}
