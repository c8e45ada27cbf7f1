//! Group Relative Policy Optimization.
//!
//! Each step rolls out a group of completions for one question, scores
//! them through the configured reward channel, normalizes the rewards
//! into group-relative advantages, and takes one gradient-ascent step on
//! the clipped token-level surrogate. The sequence-level reward is
//! broadcast to every token of its rollout; the old policy refreshes
//! every step. The KL penalty is off by default and, when enabled, is an
//! exact per-token KL against a frozen reference policy at the visited
//! prefixes.
//!
//! Also houses the data-selection filters: pass@k banding and the
//! group log-likelihood spread threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::{RagContext, Rollout};
use crate::error::{Error, Result, ShortfallReport};
use crate::policy::{
    log_prob_sequence, sample_rollout, InitConfig, ParamGrad, PolicyParameters,
    SequenceEvaluation,
};
use crate::reward::clr::{score_group, ClrConfig, Fusion, RewardBundle, ScoredGroup};
use crate::reward::rules::{correctness_reward, RuleConfig};
use crate::rng::stream;
use crate::synth::{accuracy, TaskInstance};
use crate::vocab::{TokenId, Vocabulary};

/// Which reward channel feeds the advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Acc,
    Cite,
    Total,
    Clr,
    HybridMul,
    HybridAdd,
}

/// Trainer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoConfig {
    /// Rollouts per question.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_clip_epsilon")]
    pub clip_epsilon: f64,
    /// KL penalty coefficient; zero disables the reference policy
    /// entirely.
    #[serde(default)]
    pub kl_beta: f64,
    /// Step size for plain gradient ascent. Tuned for this policy class;
    /// transformer-scale values are far too small here.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub steps: usize,
    pub reward_mode: RewardMode,
    /// Stability constant in the advantage denominator.
    #[serde(default = "default_adv_epsilon")]
    pub adv_epsilon: f64,
    /// Rollout length cap.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    /// Abort when mean |parameter| exceeds this bound.
    #[serde(default = "default_divergence_bound")]
    pub divergence_bound: f64,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub clr: ClrConfig,
    #[serde(default)]
    pub rules: RuleConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_group_size() -> usize {
    8
}
fn default_clip_epsilon() -> f64 {
    0.2
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_adv_epsilon() -> f64 {
    1e-8
}
fn default_max_len() -> usize {
    16
}
fn default_divergence_bound() -> f64 {
    100.0
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            learning_rate: 0.05,
            steps: 300,
            reward_mode: RewardMode::Clr,
            adv_epsilon: 1e-8,
            max_len: 16,
            divergence_bound: 100.0,
            init: InitConfig::default(),
            clr: ClrConfig::default(),
            rules: RuleConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Per-step accuracy evaluation settings for the training log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Rollouts per task in the any-of-k accuracy.
    #[serde(default = "default_eval_k")]
    pub k_samples: usize,
    /// Cap on evaluated tasks per step; zero means the whole pool.
    #[serde(default)]
    pub max_tasks: usize,
}

fn default_eval_k() -> usize {
    1
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k_samples: 1, max_tasks: 0 }
    }
}

/// One question's rollout group with everything the surrogate needs.
#[derive(Debug, Clone)]
pub struct GroupSample {
    pub context: RagContext,
    pub rollouts: Vec<Rollout>,
    pub bundles: Vec<RewardBundle>,
    /// Per-rollout per-token log-probabilities under the sampling policy.
    pub old_logprobs: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
}

/// Group-relative advantages: `(r - mean) / (population std + eps)`,
/// broadcast to every token of the rollout.
pub fn compute_advantages(rewards: &[f64], adv_epsilon: f64) -> Vec<f64> {
    debug_assert!(!rewards.is_empty());
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards.iter().map(|r| (r - mean) / (std + adv_epsilon)).collect()
}

/// Clipped token-level surrogate objective and its analytic gradient.
///
/// Returns the scalar to maximize:
/// `(1/G) sum_i (1/T_i) sum_t [ min(r * A, clip(r) * A) - kl_beta * KL_t ]`
/// with gradient flowing only through ratios the clip leaves active.
pub fn grpo_surrogate(
    group: &GroupSample,
    params: &PolicyParameters,
    ref_params: Option<&PolicyParameters>,
    config: &GrpoConfig,
) -> Result<(f64, ParamGrad)> {
    if config.kl_beta > 0.0 && ref_params.is_none() {
        return Err(Error::MissingReference);
    }
    if group.old_logprobs.len() != group.rollouts.len()
        || group.advantages.len() != group.rollouts.len()
    {
        return Err(Error::LengthMismatch {
            expected: group.rollouts.len(),
            got: group.old_logprobs.len().min(group.advantages.len()),
        });
    }
    let g = group.rollouts.len() as f64;
    let prompt = group.context.prompt();
    let lo = 1.0 - config.clip_epsilon;
    let hi = 1.0 + config.clip_epsilon;

    let mut objective = 0.0;
    let mut grad = ParamGrad::zeros(params.vocab_size());

    for (i, rollout) in group.rollouts.iter().enumerate() {
        let old = &group.old_logprobs[i];
        if old.len() != rollout.len() {
            return Err(Error::LengthMismatch { expected: rollout.len(), got: old.len() });
        }
        let adv = group.advantages[i];
        let seq = SequenceEvaluation::new(params, &prompt, &rollout.tokens)?;
        let ref_seq = match ref_params {
            Some(rp) if config.kl_beta > 0.0 => {
                Some(SequenceEvaluation::new(rp, &prompt, &rollout.tokens)?)
            }
            _ => None,
        };
        let inv_t = 1.0 / rollout.len() as f64;
        let scale = inv_t / g;

        for t in 0..rollout.len() {
            let ratio = (seq.logprob(t) - old[t]).exp();
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(lo, hi) * adv;
            objective += scale * unclipped.min(clipped);
            // Gradient is zero exactly when the clipped branch is both
            // selected and flat: ratio above the band with positive
            // advantage, or below it with negative advantage.
            let active = !((ratio > hi && adv > 0.0) || (ratio < lo && adv < 0.0));
            if active && adv != 0.0 {
                seq.add_grad_logp(t, scale * ratio * adv, &mut grad);
            }

            if let Some(ref_seq) = &ref_seq {
                let p = seq.dist(t);
                let q = ref_seq.dist(t);
                let mut kl = 0.0;
                let mut coeffs = vec![0.0; p.len()];
                for v in 0..p.len() {
                    let diff = p[v].ln() - q[v].ln();
                    kl += p[v] * diff;
                    coeffs[v] = diff;
                }
                objective -= scale * config.kl_beta * kl;
                // d KL / d theta = sum_v (log p_v - log q_v) dp_v, since
                // the dp_v themselves sum to zero.
                for c in &mut coeffs {
                    *c *= -scale * config.kl_beta;
                }
                seq.add_grad_over_vocab(t, &coeffs, &mut grad);
            }
        }
    }
    Ok((objective, grad))
}

/// Fraction of `k` seeded rollouts whose answer is correct.
pub fn pass_at_k(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    context: &RagContext,
    answer: &[TokenId],
    k: usize,
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidTaskSpec("pass@k needs k >= 1".into()));
    }
    let prompt = context.prompt();
    let mut hits = 0usize;
    for j in 0..k {
        let roll_seed = stream(seed, "pass_at_k", j as u64).random();
        let y = sample_rollout(params, &prompt, max_len, vocab.eos(), roll_seed)?;
        hits += usize::from(correctness_reward(&y, answer, vocab)? == 1);
    }
    Ok(hits as f64 / k as f64)
}

/// Precomputed selection statistics for one candidate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    /// Index into the candidate pool.
    pub index: usize,
    pub pass_at_k: f64,
    /// Population std of the group's sequence log-likelihoods.
    pub logprob_std: f64,
}

/// Computes pass@k and log-likelihood spread for every task, from one
/// group of `k` seeded rollouts each.
pub fn compute_sample_stats(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    tasks: &[TaskInstance],
    k: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<SampleStats>> {
    let mut out = Vec::with_capacity(tasks.len());
    for (index, task) in tasks.iter().enumerate() {
        let prompt = task.context.prompt();
        let mut hits = 0usize;
        let mut scores = Vec::with_capacity(k);
        for j in 0..k {
            let roll_seed = stream(seed, "sample_stats", (index * k + j) as u64).random();
            let y = sample_rollout(params, &prompt, max_len, vocab.eos(), roll_seed)?;
            hits += usize::from(correctness_reward(&y, &task.answer, vocab)? == 1);
            scores.push(log_prob_sequence(params, &prompt, &y)?.1);
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        out.push(SampleStats {
            index,
            pass_at_k: hits as f64 / k as f64,
            logprob_std: var.sqrt(),
        });
    }
    Ok(out)
}

/// Data-selection settings mirroring the pass@k banding plus the
/// log-likelihood spread threshold. The spread threshold is calibrated to
/// this toy scale only; it is not comparable across policy classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Number of samples to select.
    pub target_size: usize,
    /// Inclusive pass@k band for the main stratum.
    #[serde(default = "default_band")]
    pub band: (f64, f64),
    /// Fraction of the output drawn from the band stratum.
    #[serde(default = "default_band_fraction")]
    pub band_fraction: f64,
    /// Spread threshold (strict); `None` disables the spread filter.
    #[serde(default)]
    pub std_threshold: Option<f64>,
}

fn default_band() -> (f64, f64) {
    (0.1, 0.875)
}
fn default_band_fraction() -> f64 {
    0.9
}

/// Stratified take: `band_fraction` of the output from the pass@k band,
/// the rest from perfect-pass samples, each in input order. Returns the
/// selected indices in ascending order; errors with a shortfall report
/// instead of padding when a stratum is too small.
pub fn filter_dataset(stats: &[SampleStats], config: &FilterConfig) -> Result<Vec<usize>> {
    let eligible: Vec<&SampleStats> = stats
        .iter()
        .filter(|s| config.std_threshold.is_none_or(|thr| s.logprob_std > thr))
        .collect();
    let (lo, hi) = config.band;
    let band: Vec<usize> = eligible
        .iter()
        .filter(|s| s.pass_at_k >= lo && s.pass_at_k <= hi)
        .map(|s| s.index)
        .collect();
    let full: Vec<usize> =
        eligible.iter().filter(|s| s.pass_at_k == 1.0).map(|s| s.index).collect();

    let n_band =
        ((config.target_size as f64 * config.band_fraction).round() as usize).min(config.target_size);
    let n_full = config.target_size - n_band;
    if band.len() < n_band || full.len() < n_full {
        return Err(Error::FilterShortfall(ShortfallReport {
            band_requested: n_band,
            band_available: band.len(),
            full_requested: n_full,
            full_available: full.len(),
        }));
    }
    let mut selected: Vec<usize> =
        band.into_iter().take(n_band).chain(full.into_iter().take(n_full)).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// One line of the training log. Every field describes the policy that
/// sampled this step's rollouts, i.e. the parameters before the step's
/// update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_len: f64,
    pub acc_with_docs: f64,
    pub acc_without_docs: f64,
    pub rr: f64,
    pub ppl_full_seq: f64,
    pub ppl_full_tok: f64,
    pub ppl_loo_seq: f64,
    pub ppl_loo_tok: f64,
}

/// Line-delimited training log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records })
    }
}

fn select_reward(bundle: &RewardBundle, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::Acc => f64::from(bundle.r_acc),
        RewardMode::Cite => bundle.r_cite,
        RewardMode::Total => bundle.r_total,
        RewardMode::Clr => bundle.r_clr_raw,
        RewardMode::HybridMul | RewardMode::HybridAdd => bundle.r_hybrid,
    }
}

/// The hybrid reward modes force the matching fusion rule.
fn effective_clr(config: &GrpoConfig) -> ClrConfig {
    let mut clr = config.clr;
    match config.reward_mode {
        RewardMode::HybridMul => clr.fusion = Fusion::Mul,
        RewardMode::HybridAdd => clr.fusion = Fusion::Add,
        _ => {}
    }
    clr
}

/// Mean perplexity forms of one scored group, from its profiles.
fn group_perplexities(scored: &ScoredGroup, clr: &ClrConfig) -> (f64, f64, f64, f64) {
    let n = scored.profiles.len() as f64;
    let mut acc = [0.0f64; 4];
    for profile in &scored.profiles {
        let t = profile.len() as f64;
        let s_full: f64 = profile.full.iter().sum();
        let sums: Vec<f64> = profile.loo.values().map(|v| v.iter().sum()).collect();
        let s_loo = match clr.loo_mode {
            crate::reward::clr::LooMode::Min => {
                sums.iter().copied().fold(f64::INFINITY, f64::min)
            }
            crate::reward::clr::LooMode::Avg => sums.iter().sum::<f64>() / sums.len() as f64,
        };
        acc[0] += (-s_full).exp();
        acc[1] += (-s_full / t).exp();
        acc[2] += (-s_loo).exp();
        acc[3] += (-s_loo / t).exp();
    }
    (acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n)
}

/// Runs the training loop: one question per step, a group of rollouts,
/// reward scoring, advantage normalization, and a single gradient-ascent
/// update. Deterministic for a fixed seed.
pub fn train(
    config: &GrpoConfig,
    vocab: &Vocabulary,
    tasks: &[TaskInstance],
    seed: u64,
) -> Result<(PolicyParameters, TrainLog)> {
    if tasks.is_empty() {
        return Err(Error::InvalidTaskSpec("training needs a non-empty task set".into()));
    }
    let mut params = PolicyParameters::init(vocab, seed, &config.init);
    let ref_params = (config.kl_beta > 0.0).then(|| params.clone());
    let clr_cfg = effective_clr(config);

    let eval_tasks = match config.eval.max_tasks {
        0 => tasks,
        cap => &tasks[..cap.min(tasks.len())],
    };
    // One fixed evaluation seed: accuracy curves move only because the
    // parameters move.
    let eval_seed: u64 = stream(seed, "train_eval", 0).random();

    let mut records = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let task_idx = stream(seed, "task_select", step as u64).random_range(0..tasks.len());
        let task = &tasks[task_idx];
        let prompt = task.context.prompt();

        let mut rollouts = Vec::with_capacity(config.group_size);
        let mut old_logprobs = Vec::with_capacity(config.group_size);
        for i in 0..config.group_size {
            let roll_seed = stream(seed, "rollout", (step * config.group_size + i) as u64).random();
            let y = sample_rollout(&params, &prompt, config.max_len, vocab.eos(), roll_seed)?;
            old_logprobs.push(log_prob_sequence(&params, &prompt, &y)?.0);
            rollouts.push(y);
        }

        let mut scored = score_group(
            &params,
            vocab,
            &task.context,
            &rollouts,
            &task.answer,
            &clr_cfg,
            &config.rules,
        )?;
        let rewards: Vec<f64> =
            scored.bundles.iter().map(|b| select_reward(b, config.reward_mode)).collect();
        let advantages = compute_advantages(&rewards, config.adv_epsilon);
        for (bundle, &a) in scored.bundles.iter_mut().zip(&advantages) {
            bundle.advantage = Some(a);
        }

        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let mean_len = rollouts.iter().map(|r| r.len() as f64).sum::<f64>()
            / rollouts.len() as f64;
        let (ppl_full_seq, ppl_full_tok, ppl_loo_seq, ppl_loo_tok) =
            group_perplexities(&scored, &clr_cfg);
        let acc_with_docs = accuracy(
            &params,
            vocab,
            eval_tasks,
            true,
            config.eval.k_samples,
            config.max_len,
            eval_seed,
        )?;
        let acc_without_docs = accuracy(
            &params,
            vocab,
            eval_tasks,
            false,
            config.eval.k_samples,
            config.max_len,
            eval_seed,
        )?;
        records.push(TrainRecord {
            step,
            mean_reward,
            mean_len,
            acc_with_docs,
            acc_without_docs,
            rr: acc_with_docs - acc_without_docs,
            ppl_full_seq,
            ppl_full_tok,
            ppl_loo_seq,
            ppl_loo_tok,
        });

        let group = GroupSample {
            context: task.context.clone(),
            rollouts,
            bundles: scored.bundles,
            old_logprobs,
            advantages,
        };
        let (_objective, grad) = grpo_surrogate(&group, &params, ref_params.as_ref(), config)?;
        params.axpy(config.learning_rate, &grad);

        let mean_abs = params.mean_abs();
        if mean_abs > config.divergence_bound {
            return Err(Error::Diverged { step, mean_abs, bound: config.divergence_bound });
        }
    }
    if config.steps > 0 {
        params.tag =
            format!("trained(seed={seed},steps={},mode={:?})", config.steps, config.reward_mode);
    }
    Ok((params, TrainLog { records }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_tasks, TaskSpec};

    #[test]
    fn advantages_of_equal_rewards_are_zero() {
        assert_eq!(compute_advantages(&[1.0, 1.0, 1.0, 1.0], 1e-8), vec![0.0; 4]);
    }

    #[test]
    fn advantages_of_binary_pair() {
        let adv = compute_advantages(&[0.0, 1.0], 1e-8);
        let expected = 0.5 / (0.5 + 1e-8);
        assert!((adv[0] + expected).abs() < 1e-15);
        assert!((adv[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn advantages_center_and_scale_large_groups() {
        let mut rng = stream(5, "adv_test", 0);
        let rewards: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 3.0).collect();
        let adv = compute_advantages(&rewards, 1e-8);
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        assert!(mean.abs() < 1e-9, "mean = {mean}");
        let n = rewards.len() as f64;
        let rmean = rewards.iter().sum::<f64>() / n;
        let sigma =
            (rewards.iter().map(|r| (r - rmean) * (r - rmean)).sum::<f64>() / n).sqrt();
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let expected = sigma / (sigma + 1e-8);
        assert!(var.sqrt() >= expected - 1e-6 && var.sqrt() <= expected + 1e-12);
    }

    fn tiny_tasks() -> (Vocabulary, Vec<TaskInstance>) {
        let spec = TaskSpec {
            n_docs: 3,
            n_supporting: 1,
            hops: 1,
            doc_len: 6,
            vocab: Vocabulary::new(32, 3).unwrap(),
            n_tasks: 8,
            seed: 13,
        };
        (spec.vocab, gen_tasks(&spec).unwrap())
    }

    fn sample_group(
        params: &PolicyParameters,
        vocab: &Vocabulary,
        task: &TaskInstance,
        g: usize,
        advantages: Option<Vec<f64>>,
    ) -> GroupSample {
        let prompt = task.context.prompt();
        let mut rollouts = Vec::new();
        let mut old = Vec::new();
        for i in 0..g {
            let y = sample_rollout(params, &prompt, 8, vocab.eos(), 1000 + i as u64).unwrap();
            old.push(log_prob_sequence(params, &prompt, &y).unwrap().0);
            rollouts.push(y);
        }
        let advantages = advantages.unwrap_or_else(|| {
            compute_advantages(
                &rollouts.iter().map(|r| r.len() as f64).collect::<Vec<_>>(),
                1e-8,
            )
        });
        GroupSample {
            context: task.context.clone(),
            rollouts,
            bundles: Vec::new(),
            old_logprobs: old,
            advantages,
        }
    }

    #[test]
    fn surrogate_at_old_params_equals_mean_advantage() {
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 1, &InitConfig::default());
        let group = sample_group(&params, &vocab, &tasks[0], 4, None);
        let config = GrpoConfig { group_size: 4, ..GrpoConfig::default() };
        let (obj, _) = grpo_surrogate(&group, &params, None, &config).unwrap();
        let mean_adv = group.advantages.iter().sum::<f64>() / 4.0;
        assert!((obj - mean_adv).abs() < 1e-9, "obj {obj} vs mean advantage {mean_adv}");
    }

    #[test]
    fn surrogate_with_zero_advantages_is_zero() {
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 2, &InitConfig::default());
        let group = sample_group(&params, &vocab, &tasks[1], 3, Some(vec![0.0; 3]));
        let config = GrpoConfig { group_size: 3, ..GrpoConfig::default() };
        let (obj, grad) = grpo_surrogate(&group, &params, None, &config).unwrap();
        assert_eq!(obj, 0.0);
        assert!((0..grad.flat_len()).all(|i| grad.get_flat(i) == 0.0));
    }

    #[test]
    fn surrogate_rejects_kl_without_reference() {
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 3, &InitConfig::default());
        let group = sample_group(&params, &vocab, &tasks[0], 2, None);
        let config = GrpoConfig { kl_beta: 0.1, ..GrpoConfig::default() };
        assert!(matches!(
            grpo_surrogate(&group, &params, None, &config),
            Err(Error::MissingReference)
        ));
    }

    #[test]
    fn surrogate_rejects_length_mismatch() {
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 4, &InitConfig::default());
        let mut group = sample_group(&params, &vocab, &tasks[0], 2, None);
        group.old_logprobs[0].push(-1.0);
        let config = GrpoConfig::default();
        assert!(matches!(
            grpo_surrogate(&group, &params, None, &config),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn clipping_bounds_the_per_token_term() {
        // Synthetic single-token group with a ratio forced far outside
        // the clip band on both sides.
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 5, &InitConfig::default());
        let prompt = tasks[0].context.prompt();
        let y = sample_rollout(&params, &prompt, 1, vocab.eos(), 7).unwrap();
        let true_lp = log_prob_sequence(&params, &prompt, &y).unwrap().0;
        let eps = 0.2;
        for (shift, adv) in [(2.0, 1.5), (2.0, -1.5), (-2.0, 1.5), (-2.0, -1.5)] {
            let group = GroupSample {
                context: tasks[0].context.clone(),
                rollouts: vec![y.clone()],
                bundles: Vec::new(),
                // Shifting the stored old logprob forces ratio = e^shift.
                old_logprobs: vec![vec![true_lp[0] - shift]],
                advantages: vec![adv],
            };
            let config = GrpoConfig { clip_epsilon: eps, ..GrpoConfig::default() };
            let (obj, _) = grpo_surrogate(&group, &params, None, &config).unwrap();
            let bound = ((1.0 + eps) * adv).max((1.0 - eps) * adv);
            assert!(obj <= bound + 1e-12, "term {obj} exceeds bound {bound}");
        }
    }

    #[test]
    fn pass_at_k_counts_seeded_rollouts() {
        let (vocab, tasks) = tiny_tasks();
        // Deterministic copying policy solves every single-hop task.
        let mut copier = PolicyParameters::zeros(32);
        copier.gate[0] = 25.0;
        copier.copy = vec![8.0, 16.0, 0.0];
        let p = pass_at_k(&copier, &vocab, &tasks[0].context, &tasks[0].answer, 8, 10, 3).unwrap();
        assert_eq!(p, 1.0);
        // A policy that emits EOS immediately never answers.
        let mut quitter = PolicyParameters::zeros(32);
        quitter.gate[0] = -1e9;
        quitter.unigram[vocab.eos() as usize] = 1e3;
        let p = pass_at_k(&quitter, &vocab, &tasks[0].context, &tasks[0].answer, 8, 10, 3).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn pass_at_k_matches_direct_enumeration() {
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 8, &InitConfig::default());
        let task = &tasks[2];
        let k = 8;
        let p = pass_at_k(&params, &vocab, &task.context, &task.answer, k, 10, 77).unwrap();
        let prompt = task.context.prompt();
        let mut hits = 0;
        for j in 0..k {
            let roll_seed = stream(77, "pass_at_k", j as u64).random();
            let y = sample_rollout(&params, &prompt, 10, vocab.eos(), roll_seed).unwrap();
            hits += i32::from(correctness_reward(&y, &task.answer, &vocab).unwrap() == 1);
        }
        assert_eq!(p, f64::from(hits) / k as f64);
    }

    #[test]
    fn filter_band_and_threshold_edges() {
        let stats = vec![
            SampleStats { index: 0, pass_at_k: 0.9375, logprob_std: 20.0 },
            SampleStats { index: 1, pass_at_k: 0.5, logprob_std: 20.0 },
            SampleStats { index: 2, pass_at_k: 0.5, logprob_std: 10.0 },
            SampleStats { index: 3, pass_at_k: 1.0, logprob_std: 20.0 },
        ];
        let config = FilterConfig {
            target_size: 2,
            band: (0.1, 0.875),
            band_fraction: 0.5,
            std_threshold: Some(10.0),
        };
        let picked = filter_dataset(&stats, &config).unwrap();
        // 0.9375 is outside the band and not 1.0; std == 10.0 fails the
        // strict threshold.
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn filter_proportions_are_90_10() {
        let mut stats = Vec::new();
        for i in 0..200 {
            stats.push(SampleStats { index: i, pass_at_k: 0.5, logprob_std: 50.0 });
        }
        for i in 200..260 {
            stats.push(SampleStats { index: i, pass_at_k: 1.0, logprob_std: 50.0 });
        }
        let config = FilterConfig {
            target_size: 100,
            band: (0.1, 0.875),
            band_fraction: 0.9,
            std_threshold: None,
        };
        let picked = filter_dataset(&stats, &config).unwrap();
        assert_eq!(picked.len(), 100);
        let band_count = picked.iter().filter(|&&i| i < 200).count();
        assert_eq!(band_count, 90);
    }

    #[test]
    fn filter_reports_shortfall() {
        let stats =
            vec![SampleStats { index: 0, pass_at_k: 0.5, logprob_std: 50.0 }];
        let config = FilterConfig {
            target_size: 10,
            band: (0.1, 0.875),
            band_fraction: 0.9,
            std_threshold: None,
        };
        match filter_dataset(&stats, &config) {
            Err(Error::FilterShortfall(report)) => {
                assert_eq!(report.band_requested, 9);
                assert_eq!(report.band_available, 1);
                assert_eq!(report.full_requested, 1);
                assert_eq!(report.full_available, 0);
            }
            other => panic!("expected shortfall, got {other:?}"),
        }
    }

    #[test]
    fn zero_steps_returns_initial_params_and_empty_log() {
        let (vocab, tasks) = tiny_tasks();
        let config = GrpoConfig { steps: 0, ..GrpoConfig::default() };
        let (params, log) = train(&config, &vocab, &tasks, 5).unwrap();
        assert_eq!(params, PolicyParameters::init(&vocab, 5, &config.init));
        assert!(log.records.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (vocab, tasks) = tiny_tasks();
        let config = GrpoConfig {
            steps: 5,
            group_size: 4,
            max_len: 8,
            eval: EvalConfig { k_samples: 1, max_tasks: 4 },
            ..GrpoConfig::default()
        };
        let (p1, l1) = train(&config, &vocab, &tasks, 17).unwrap();
        let (p2, l2) = train(&config, &vocab, &tasks, 17).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1.to_jsonl().unwrap(), l2.to_jsonl().unwrap());
    }

    #[test]
    fn divergence_guard_trips() {
        let (vocab, tasks) = tiny_tasks();
        let config = GrpoConfig {
            steps: 50,
            group_size: 4,
            learning_rate: 1e6,
            divergence_bound: 10.0,
            eval: EvalConfig { k_samples: 1, max_tasks: 1 },
            ..GrpoConfig::default()
        };
        match train(&config, &vocab, &tasks, 3) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence abort, got {other:?}"),
        }
    }

    #[test]
    fn kl_off_never_touches_reference() {
        // Structural check: with kl_beta = 0 the surrogate accepts a
        // missing reference, so no reference policy is ever evaluated.
        let (vocab, tasks) = tiny_tasks();
        let params = PolicyParameters::init(&vocab, 9, &InitConfig::default());
        let group = sample_group(&params, &vocab, &tasks[0], 2, None);
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        assert!(grpo_surrogate(&group, &params, None, &config).is_ok());
    }

    #[test]
    fn train_log_round_trips() {
        let log = TrainLog {
            records: vec![TrainRecord {
                step: 0,
                mean_reward: 0.5,
                mean_len: 7.25,
                acc_with_docs: 0.625,
                acc_without_docs: 0.125,
                rr: 0.5,
                ppl_full_seq: 1234.5,
                ppl_full_tok: 12.75,
                ppl_loo_seq: 2345.5,
                ppl_loo_tok: 13.5,
            }],
        };
        let text = log.to_jsonl().unwrap();
        assert_eq!(TrainLog::from_jsonl(&text).unwrap(), log);
        let value: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for field in [
            "step",
            "mean_reward",
            "mean_len",
            "acc_with_docs",
            "acc_without_docs",
            "rr",
            "ppl_full_seq",
            "ppl_full_tok",
            "ppl_loo_seq",
            "ppl_loo_tok",
        ] {
            assert!(value.get(field).is_some(), "missing field {field}");
        }
    }
}
