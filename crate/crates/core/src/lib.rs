//! Contrastive likelihood rewards over synthetic retrieval QA.
//!
//! A desk-scale laboratory for reward shaping in retrieval-augmented
//! generation: a differentiable copy/generate toy policy with exact
//! gradients, leave-one-out evidential attribution of rollout likelihood
//! to supporting documents, the thresholded contrastive likelihood reward
//! with rule-reward fusion, a GRPO trainer, seeded task generation, and
//! token-level attribution heatmaps.
//!
//! Modules map one-to-one onto the subsystems:
//!
//! - [`policy`]: the label-blind policy, its likelihood oracle, sampler,
//!   analytic gradient, and checkpoint format.
//! - [`reward`]: contrastive likelihood rewards ([`reward::clr`]) and
//!   rule rewards ([`reward::rules`]).
//! - [`grpo`]: group-relative training loop, surrogate objective, and
//!   data-selection filters.
//! - [`synth`]: synthetic single- and two-hop task generation plus the
//!   accuracy / reliance / perplexity metrics.
//! - [`viz`]: heatmap rendering of token-level contributions.

pub mod context;
pub mod error;
pub mod grpo;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod synth;
pub mod viz;
pub mod vocab;

pub use context::{Document, Prompt, RagContext, Rollout, Termination};
pub use error::{Error, Result};
pub use grpo::{
    compute_advantages, filter_dataset, grpo_surrogate, pass_at_k, train, EvalConfig,
    FilterConfig, GroupSample, GrpoConfig, RewardMode, SampleStats, TrainLog, TrainRecord,
};
pub use policy::{
    grad_log_prob, log_prob_sequence, next_token_distribution, sample_rollout, Checkpoint,
    InitConfig, ParamGrad, PolicyParameters,
};
pub use reward::{
    citation_reward, clr_reward, correctness_reward, evidential_contribution, hybrid_reward,
    likelihood_profile, normalize_group, score_group, ClrConfig, EvidentialScore, Fusion,
    LengthNorm, LikelihoodProfile, LooMode, RewardBundle, RuleConfig, ScoredGroup,
};
pub use synth::{
    accuracy, gen_tasks, perplexities, reference_reliance, tasks_from_jsonl, tasks_to_jsonl,
    validate_instance, Perplexities, TaskInstance, TaskSpec,
};
pub use viz::{render_heatmap, HeatmapDoc, HeatmapFormat};
pub use vocab::{TokenId, Vocabulary};
