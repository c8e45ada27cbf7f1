//! Contrastive likelihood rewards.
//!
//! The chain runs: score a rollout under the full document set and under
//! each leave-one-out (LOO) context missing one supporting document
//! ([`likelihood_profile`]); reduce to the Evidential Contribution, the
//! drop in sequence log-likelihood when the most critical supporting
//! document is removed ([`evidential_contribution`]); gate by a
//! significance threshold and normalize by sequence length
//! ([`clr_reward`]); min-max scale within the rollout group
//! ([`normalize_group`]); and fuse with binary correctness
//! ([`hybrid_reward`]). [`score_group`] composes the whole stack plus the
//! rule rewards for one group of rollouts sharing a question.
//!
//! All reductions run in index order so repeated runs are bit-identical.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::context::{RagContext, Rollout};
use crate::error::{Error, Result};
use crate::policy::{log_prob_sequence, PolicyParameters};
use crate::reward::rules::{citation_reward, correctness_reward, total_reward, RuleConfig};
use crate::vocab::{TokenId, Vocabulary};

/// Per-token log-probabilities of one rollout under the full context and
/// under each supporting-document removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodProfile {
    /// Log-probabilities under the full document set, length `T`.
    pub full: Vec<f64>,
    /// Per supporting doc id: log-probabilities with that document
    /// removed, each length `T`. Ordered map so iteration is stable.
    pub loo: BTreeMap<u32, Vec<f64>>,
}

impl LikelihoodProfile {
    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    /// Shape and finiteness checks.
    pub fn validate(&self) -> Result<()> {
        if self.full.is_empty() {
            return Err(Error::MalformedProfile("empty full vector".into()));
        }
        if self.loo.is_empty() {
            return Err(Error::MalformedProfile("no leave-one-out entries".into()));
        }
        let t = self.full.len();
        for (doc, v) in &self.loo {
            if v.len() != t {
                return Err(Error::MalformedProfile(format!(
                    "loo[{doc}] has length {}, expected {t}",
                    v.len()
                )));
            }
        }
        let finite = self.full.iter().chain(self.loo.values().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::MalformedProfile("non-finite entry".into()));
        }
        Ok(())
    }
}

/// Pooling rule over the leave-one-out scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LooMode {
    /// Most critical document: minimum LOO score (bottleneck).
    #[default]
    Min,
    /// Average pooling over supporting documents.
    Avg,
}

/// How the reward is scaled by sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LengthNorm {
    /// No length scaling.
    None,
    /// Divide by `T`.
    Linear,
    /// Divide by `sqrt(T)`.
    #[default]
    Sqrt,
}

/// How the normalized contrastive reward combines with correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Gating: zero reward whenever the answer is wrong.
    #[default]
    Mul,
    /// Additive partial credit.
    Add,
}

/// Settings for the contrastive reward stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClrConfig {
    /// Significance threshold on the Evidential Contribution.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub loo_mode: LooMode,
    /// Stability constant in the min-max denominator.
    #[serde(default = "default_norm_epsilon")]
    pub norm_epsilon: f64,
    #[serde(default)]
    pub fusion: Fusion,
    #[serde(default)]
    pub length_norm: LengthNorm,
}

fn default_tau() -> f64 {
    1.0
}

fn default_norm_epsilon() -> f64 {
    1e-8
}

impl Default for ClrConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            loo_mode: LooMode::Min,
            norm_epsilon: 1e-8,
            fusion: Fusion::Mul,
            length_norm: LengthNorm::Sqrt,
        }
    }
}

/// Sequence- and token-level Evidential Contribution of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidentialScore {
    /// Sequence-level contribution `E`.
    pub e: f64,
    /// Token-level decomposition; sums to `E`.
    pub eps: Vec<f64>,
    /// Document attaining the minimum LOO score (min mode only; ties go
    /// to the smallest doc id).
    pub critical_doc: Option<u32>,
    pub mode: LooMode,
}

/// Every reward channel for one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBundle {
    /// Thresholded, length-normalized contrastive reward; never negative.
    pub r_clr_raw: f64,
    /// Group min-max normalized contrastive reward in `[0, 1)`.
    pub r_clr_norm: f64,
    /// Binary correctness.
    pub r_acc: u8,
    /// Citation recall in `[0, 1]`.
    pub r_cite: f64,
    /// Fused contrastive/correctness reward.
    pub r_hybrid: f64,
    /// Weighted rule total.
    pub r_total: f64,
    /// Group-relative advantage; filled by the trainer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
}

/// Scores one rollout under the full context and under each
/// supporting-document removal. Document order and ids of the remaining
/// documents are preserved in every leave-one-out context.
pub fn likelihood_profile(
    params: &PolicyParameters,
    context: &RagContext,
    rollout: &Rollout,
) -> Result<LikelihoodProfile> {
    let supporting = context.supporting_ids();
    if supporting.is_empty() {
        return Err(Error::NoSupportingDocument);
    }
    let (full, _) = log_prob_sequence(params, &context.prompt(), rollout)?;
    let mut loo = BTreeMap::new();
    for doc_id in supporting {
        let (vec, _) = log_prob_sequence(params, &context.prompt_without(doc_id), rollout)?;
        loo.insert(doc_id, vec);
    }
    Ok(LikelihoodProfile { full, loo })
}

/// Reduces a profile to its Evidential Contribution.
///
/// Min mode: `E = S(full) - min_d S(loo[d])`, the critical document is
/// the argmin (smallest id on ties), and the token decomposition
/// contrasts against that document alone. Avg mode: the mean over
/// supporting documents replaces the min, token-wise, so the
/// decomposition identity holds in both modes.
pub fn evidential_contribution(profile: &LikelihoodProfile, mode: LooMode) -> Result<EvidentialScore> {
    profile.validate()?;
    let s_full: f64 = profile.full.iter().sum();
    match mode {
        LooMode::Min => {
            let mut critical = None;
            let mut min_sum = f64::INFINITY;
            for (&doc, vec) in &profile.loo {
                let s: f64 = vec.iter().sum();
                // BTreeMap iterates in ascending doc id order, so a strict
                // comparison keeps the smallest id on ties.
                if s < min_sum {
                    min_sum = s;
                    critical = Some(doc);
                }
            }
            let doc = critical.expect("validated non-empty");
            let loo_vec = &profile.loo[&doc];
            let eps: Vec<f64> =
                profile.full.iter().zip(loo_vec).map(|(f, l)| f - l).collect();
            Ok(EvidentialScore { e: s_full - min_sum, eps, critical_doc: Some(doc), mode })
        }
        LooMode::Avg => {
            let n = profile.loo.len() as f64;
            let mut mean = vec![0.0; profile.len()];
            for vec in profile.loo.values() {
                for (m, x) in mean.iter_mut().zip(vec) {
                    *m += x;
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            let eps: Vec<f64> = profile.full.iter().zip(&mean).map(|(f, l)| f - l).collect();
            let mean_sum: f64 = mean.iter().sum();
            Ok(EvidentialScore { e: s_full - mean_sum, eps, critical_doc: None, mode })
        }
    }
}

/// Thresholded, `sqrt(T)`-normalized contrastive reward:
/// `E / sqrt(T)` when `E > tau`, else exactly zero.
pub fn clr_reward(score: &EvidentialScore, t: usize, tau: f64) -> f64 {
    clr_reward_with_norm(score.e, t, tau, LengthNorm::Sqrt)
}

/// Thresholded reward under a configurable length normalization.
pub fn clr_reward_with_norm(e: f64, t: usize, tau: f64, norm: LengthNorm) -> f64 {
    debug_assert!(t >= 1);
    if e > tau {
        match norm {
            LengthNorm::None => e,
            LengthNorm::Linear => e / t as f64,
            LengthNorm::Sqrt => e / (t as f64).sqrt(),
        }
    } else {
        0.0
    }
}

/// Group-wise min-max scaling: `(x - min) / (max - min + eps)`.
/// Every output lies in `[0, 1)` and the minimum maps to exactly zero.
pub fn normalize_group(raw: &[f64], norm_epsilon: f64) -> Vec<f64> {
    debug_assert!(!raw.is_empty());
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom = max - min + norm_epsilon;
    raw.iter().map(|&x| (x - min) / denom).collect()
}

/// Fuses the normalized contrastive reward with binary correctness.
pub fn hybrid_reward(r_norm: f64, r_acc: u8, fusion: Fusion) -> f64 {
    match fusion {
        Fusion::Mul => r_norm * f64::from(r_acc),
        Fusion::Add => r_norm + f64::from(r_acc),
    }
}

/// Group scoring output: bundles plus the intermediate profiles and
/// scores, kept for logging and visualization.
#[derive(Debug, Clone)]
pub struct ScoredGroup {
    pub bundles: Vec<RewardBundle>,
    pub profiles: Vec<LikelihoodProfile>,
    pub scores: Vec<EvidentialScore>,
}

/// Composes the full reward stack for one group of rollouts sharing a
/// question. Order per rollout: profile, evidential contribution,
/// thresholded reward; then group normalization across exactly this
/// group; then correctness, citation, fusion, and the rule total.
pub fn score_group(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    context: &RagContext,
    rollouts: &[Rollout],
    answer: &[TokenId],
    clr_cfg: &ClrConfig,
    rule_cfg: &RuleConfig,
) -> Result<ScoredGroup> {
    let profiles = rollouts
        .iter()
        .map(|y| likelihood_profile(params, context, y))
        .collect::<Result<Vec<_>>>()?;
    score_group_from_profiles(profiles, vocab, context, rollouts, answer, clr_cfg, rule_cfg)
}

/// Same composition, but over precomputed likelihood profiles (the
/// scoring-service path when the caller supplies its own likelihoods).
pub fn score_group_from_profiles(
    profiles: Vec<LikelihoodProfile>,
    vocab: &Vocabulary,
    context: &RagContext,
    rollouts: &[Rollout],
    answer: &[TokenId],
    clr_cfg: &ClrConfig,
    rule_cfg: &RuleConfig,
) -> Result<ScoredGroup> {
    if profiles.len() != rollouts.len() {
        return Err(Error::LengthMismatch { expected: rollouts.len(), got: profiles.len() });
    }
    let supporting = context.supporting_ids();
    if supporting.is_empty() {
        return Err(Error::NoSupportingDocument);
    }
    for (i, (profile, rollout)) in profiles.iter().zip(rollouts).enumerate() {
        if profile.len() != rollout.len() {
            return Err(Error::MalformedProfile(format!(
                "profile {i} has length {}, rollout has {}",
                profile.len(),
                rollout.len()
            )));
        }
        let keys: Vec<u32> = profile.loo.keys().copied().collect();
        if keys != supporting {
            return Err(Error::MalformedProfile(format!(
                "profile {i} loo keys {keys:?} do not match supporting ids {supporting:?}"
            )));
        }
    }

    let scores = profiles
        .iter()
        .map(|p| evidential_contribution(p, clr_cfg.loo_mode))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = scores
        .iter()
        .zip(rollouts)
        .map(|(s, y)| clr_reward_with_norm(s.e, y.len(), clr_cfg.tau, clr_cfg.length_norm))
        .collect();
    let norm = normalize_group(&raw, clr_cfg.norm_epsilon);

    let mut bundles = Vec::with_capacity(rollouts.len());
    for ((rollout, &r_clr_raw), &r_clr_norm) in rollouts.iter().zip(&raw).zip(&norm) {
        let r_acc = correctness_reward(rollout, answer, vocab)?;
        let r_cite = citation_reward(rollout, &supporting, vocab)?;
        let r_hybrid = hybrid_reward(r_clr_norm, r_acc, clr_cfg.fusion);
        let r_total = total_reward(r_cite, r_acc, rollout, rule_cfg);
        bundles.push(RewardBundle {
            r_clr_raw,
            r_clr_norm,
            r_acc,
            r_cite,
            r_hybrid,
            r_total,
            advantage: None,
        });
    }
    Ok(ScoredGroup { bundles, profiles, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{Document, Termination};
    use crate::policy::InitConfig;

    fn profile(full: Vec<f64>, loo: Vec<(u32, Vec<f64>)>) -> LikelihoodProfile {
        LikelihoodProfile { full, loo: loo.into_iter().collect() }
    }

    #[test]
    fn zero_contribution_when_loo_equals_full() {
        let p = profile(vec![-1.0, -2.0], vec![(0, vec![-1.0, -2.0]), (1, vec![-1.0, -2.0])]);
        for mode in [LooMode::Min, LooMode::Avg] {
            let s = evidential_contribution(&p, mode).unwrap();
            assert_eq!(s.e, 0.0);
            assert!(s.eps.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn singleton_support_makes_modes_agree() {
        let p = profile(vec![-1.0, -3.0], vec![(2, vec![-2.0, -4.0])]);
        let min = evidential_contribution(&p, LooMode::Min).unwrap();
        let avg = evidential_contribution(&p, LooMode::Avg).unwrap();
        assert_eq!(min.e, avg.e);
        assert_eq!(min.eps, avg.eps);
        assert_eq!(min.critical_doc, Some(2));
        assert_eq!(avg.critical_doc, None);
    }

    #[test]
    fn min_and_avg_arithmetic() {
        // full sums to -10; loo sums are d0: -13, d1: -11.
        let p = profile(
            vec![-5.0, -5.0],
            vec![(0, vec![-6.0, -7.0]), (1, vec![-5.5, -5.5])],
        );
        let min = evidential_contribution(&p, LooMode::Min).unwrap();
        assert!((min.e - 3.0).abs() < 1e-12);
        assert_eq!(min.critical_doc, Some(0));
        let avg = evidential_contribution(&p, LooMode::Avg).unwrap();
        assert!((avg.e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn min_tie_breaks_to_smallest_doc_id() {
        let p = profile(vec![-4.0], vec![(3, vec![-6.0]), (7, vec![-6.0])]);
        let s = evidential_contribution(&p, LooMode::Min).unwrap();
        assert_eq!(s.critical_doc, Some(3));
    }

    #[test]
    fn decomposition_identity_both_modes() {
        let p = profile(
            vec![-1.0, -2.5, -0.25],
            vec![(0, vec![-1.5, -2.0, -3.0]), (1, vec![-2.0, -2.5, -0.5])],
        );
        for mode in [LooMode::Min, LooMode::Avg] {
            let s = evidential_contribution(&p, mode).unwrap();
            let eps_sum: f64 = s.eps.iter().sum();
            assert!((eps_sum - s.e).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_and_sqrt_scaling() {
        let score = |e: f64| EvidentialScore {
            e,
            eps: vec![e],
            critical_doc: Some(0),
            mode: LooMode::Min,
        };
        assert_eq!(clr_reward(&score(0.5), 4, 1.0), 0.0);
        assert_eq!(clr_reward(&score(1.0), 4, 1.0), 0.0); // strict threshold
        assert!((clr_reward(&score(4.0), 4, 1.0) - 2.0).abs() < 1e-15);
        assert!((clr_reward(&score(9.0), 9, 1.0) - 3.0).abs() < 1e-15);
        // tau = 0 disables the filter for positive E; exact zero stays zero.
        assert_eq!(clr_reward(&score(0.0), 4, 0.0), 0.0);
        assert!(clr_reward(&score(0.25), 4, 0.0) > 0.0);
        assert_eq!(clr_reward(&score(-1.0), 4, 0.0), 0.0);
    }

    #[test]
    fn length_norm_variants() {
        assert_eq!(clr_reward_with_norm(8.0, 16, 1.0, LengthNorm::None), 8.0);
        assert_eq!(clr_reward_with_norm(8.0, 16, 1.0, LengthNorm::Linear), 0.5);
        assert_eq!(clr_reward_with_norm(8.0, 16, 1.0, LengthNorm::Sqrt), 2.0);
    }

    #[test]
    fn group_normalization_examples() {
        let out = normalize_group(&[2.0, 4.0, 6.0], 1e-8);
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.5).abs() < 1e-7);
        assert!((out[2] - 1.0).abs() < 1e-7);
        assert!(out.iter().all(|&x| (0.0..1.0).contains(&x)));

        assert_eq!(normalize_group(&[3.0, 3.0, 3.0], 1e-8), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize_group(&[5.0], 1e-8), vec![0.0]);
    }

    #[test]
    fn hybrid_fusion() {
        assert_eq!(hybrid_reward(0.8, 0, Fusion::Mul), 0.0);
        assert!((hybrid_reward(0.8, 1, Fusion::Mul) - 0.8).abs() < 1e-15);
        assert!((hybrid_reward(0.8, 0, Fusion::Add) - 0.8).abs() < 1e-15);
        assert!((hybrid_reward(0.8, 1, Fusion::Add) - 1.8).abs() < 1e-15);
    }

    fn toy_context() -> (Vocabulary, RagContext) {
        let vocab = Vocabulary::new(32, 4).unwrap();
        let ctx = RagContext {
            query: vec![10, 11],
            documents: vec![
                Document { id: 0, tokens: vec![12, 13, 14], is_supporting: true },
                Document { id: 1, tokens: vec![15, 16], is_supporting: false },
                Document { id: 2, tokens: vec![17, 13], is_supporting: true },
            ],
        };
        (vocab, ctx)
    }

    #[test]
    fn profile_has_one_entry_per_supporting_doc() {
        let (vocab, ctx) = toy_context();
        let params = PolicyParameters::init(&vocab, 9, &InitConfig::default());
        let y = Rollout { tokens: vec![13, 14, 1], terminated_by: Termination::Eos, seed: None };
        let profile = likelihood_profile(&params, &ctx, &y).unwrap();
        assert_eq!(profile.loo.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(profile.len(), 3);
    }

    #[test]
    fn context_insensitive_policy_has_flat_profile() {
        // Gate slammed shut: the policy ignores documents entirely.
        let (_, ctx) = toy_context();
        let mut params = PolicyParameters::zeros(32);
        params.gate[0] = -1e9;
        let y = Rollout { tokens: vec![13, 14], terminated_by: Termination::MaxLen, seed: None };
        let profile = likelihood_profile(&params, &ctx, &y).unwrap();
        for vec in profile.loo.values() {
            assert_eq!(vec, &profile.full);
        }
    }

    #[test]
    fn profile_requires_supporting_document() {
        let (_, mut ctx) = toy_context();
        for d in &mut ctx.documents {
            d.is_supporting = false;
        }
        let params = PolicyParameters::zeros(32);
        let y = Rollout { tokens: vec![13], terminated_by: Termination::MaxLen, seed: None };
        assert!(matches!(
            likelihood_profile(&params, &ctx, &y),
            Err(Error::NoSupportingDocument)
        ));
    }

    #[test]
    fn single_rollout_context_insensitive_group_scores_zero() {
        let (vocab, ctx) = toy_context();
        let mut params = PolicyParameters::zeros(32);
        params.gate[0] = -1e9;
        let y = Rollout { tokens: vec![13, 14], terminated_by: Termination::MaxLen, seed: None };
        let scored = score_group(
            &params,
            &vocab,
            &ctx,
            std::slice::from_ref(&y),
            &[13, 14],
            &ClrConfig::default(),
            &RuleConfig::default(),
        )
        .unwrap();
        assert_eq!(scored.bundles.len(), 1);
        assert_eq!(scored.bundles[0].r_clr_raw, 0.0);
        assert_eq!(scored.bundles[0].r_clr_norm, 0.0);
        assert_eq!(scored.bundles[0].r_acc, 1);
        assert!(scored.bundles[0].advantage.is_none());
    }

    #[test]
    fn gating_zeroes_wrong_answers_in_group() {
        let (vocab, ctx) = toy_context();
        let params = PolicyParameters::init(&vocab, 21, &InitConfig::default());
        let rollouts = vec![
            Rollout { tokens: vec![13, 14], terminated_by: Termination::MaxLen, seed: None },
            Rollout { tokens: vec![15, 16], terminated_by: Termination::MaxLen, seed: None },
        ];
        let scored = score_group(
            &params,
            &vocab,
            &ctx,
            &rollouts,
            &[13, 14],
            &ClrConfig::default(),
            &RuleConfig::default(),
        )
        .unwrap();
        assert_eq!(scored.bundles[1].r_acc, 0);
        assert_eq!(scored.bundles[1].r_hybrid, 0.0);
    }
}
