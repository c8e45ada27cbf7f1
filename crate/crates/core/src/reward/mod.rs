//! Reward channels: contrastive likelihood rewards and rule-based
//! external rewards.

pub mod clr;
pub mod rules;

pub use clr::{
    clr_reward, clr_reward_with_norm, evidential_contribution, hybrid_reward, likelihood_profile,
    normalize_group, score_group, score_group_from_profiles, ClrConfig, EvidentialScore, Fusion,
    LengthNorm, LikelihoodProfile, LooMode, RewardBundle, ScoredGroup,
};
pub use rules::{
    citation_reward, correctness_reward, cost, strip_think_spans, total_reward, RuleConfig,
};
