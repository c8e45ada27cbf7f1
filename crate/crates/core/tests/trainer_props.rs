//! Numerical properties of the GRPO surrogate: finite-difference
//! gradients around a perturbed policy, the REINFORCE identity at the
//! sampling policy, and the finite-difference check of the exact KL
//! penalty path.

use clr_core::grpo::{compute_advantages, grpo_surrogate, GroupSample, GrpoConfig};
use clr_core::policy::{grad_log_prob, log_prob_sequence, sample_rollout, InitConfig, ParamGrad, PolicyParameters};
use clr_core::rng::stream;
use clr_core::synth::{gen_tasks, TaskSpec};
use clr_core::{TaskInstance, Vocabulary};
use rand::Rng;

fn setup() -> (Vocabulary, Vec<TaskInstance>) {
    let spec = TaskSpec {
        n_docs: 4,
        n_supporting: 1,
        hops: 1,
        doc_len: 7,
        vocab: Vocabulary::new(48, 4).unwrap(),
        n_tasks: 4,
        seed: 2024,
    };
    (spec.vocab, gen_tasks(&spec).unwrap())
}

fn build_group(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    task: &TaskInstance,
    g: usize,
    seed: u64,
) -> GroupSample {
    let prompt = task.context.prompt();
    let mut rollouts = Vec::new();
    let mut old_logprobs = Vec::new();
    let mut lengths = Vec::new();
    for i in 0..g {
        let roll_seed = stream(seed, "group", i as u64).random();
        let y = sample_rollout(params, &prompt, 8, vocab.eos(), roll_seed).unwrap();
        old_logprobs.push(log_prob_sequence(params, &prompt, &y).unwrap().0);
        lengths.push(y.len() as f64);
        rollouts.push(y);
    }
    let advantages = compute_advantages(&lengths, 1e-8);
    GroupSample {
        context: task.context.clone(),
        rollouts,
        bundles: Vec::new(),
        old_logprobs,
        advantages,
    }
}

fn fd_check(
    group: &GroupSample,
    params: &PolicyParameters,
    ref_params: Option<&PolicyParameters>,
    config: &GrpoConfig,
    n_coords: usize,
    coord_seed: u64,
) {
    let (_, grad) = grpo_surrogate(group, params, ref_params, config).unwrap();
    let h = 1e-5;
    let mut rng = stream(coord_seed, "surrogate_fd", 0);
    for _ in 0..n_coords {
        let i = rng.random_range(0..params.flat_len());
        let mut plus = params.clone();
        plus.set_flat(i, plus.get_flat(i) + h);
        let mut minus = params.clone();
        minus.set_flat(i, minus.get_flat(i) - h);
        let f_plus = grpo_surrogate(group, &plus, ref_params, config).unwrap().0;
        let f_minus = grpo_surrogate(group, &minus, ref_params, config).unwrap().0;
        let fd = (f_plus - f_minus) / (2.0 * h);
        let an = grad.get_flat(i);
        if an.abs().max(fd.abs()) < 1e-7 {
            continue;
        }
        let rel = (an - fd).abs() / an.abs().max(fd.abs());
        assert!(rel < 1e-4, "coordinate {i}: analytic {an}, fd {fd}, rel {rel}");
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let (vocab, tasks) = setup();
    let sampling = PolicyParameters::init(&vocab, 1, &InitConfig::default());
    let group = build_group(&sampling, &vocab, &tasks[0], 6, 77);
    // Perturb away from the sampling policy so the ratios are nontrivial
    // but stay inside the clip band (no kinks near the FD stencil).
    let mut params = sampling.clone();
    let mut rng = stream(5, "perturb", 0);
    for i in 0..params.flat_len() {
        let delta: f64 = rng.random_range(-0.01..0.01);
        params.set_flat(i, params.get_flat(i) + delta);
    }
    let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
    fd_check(&group, &params, None, &config, 50, 1001);
}

#[test]
fn surrogate_gradient_with_kl_matches_finite_differences() {
    let (vocab, tasks) = setup();
    let sampling = PolicyParameters::init(&vocab, 2, &InitConfig::default());
    let reference = PolicyParameters::init(&vocab, 3, &InitConfig::default());
    let group = build_group(&sampling, &vocab, &tasks[1], 4, 78);
    let mut params = sampling.clone();
    let mut rng = stream(6, "perturb", 0);
    for i in 0..params.flat_len() {
        let delta: f64 = rng.random_range(-0.01..0.01);
        params.set_flat(i, params.get_flat(i) + delta);
    }
    let config = GrpoConfig { kl_beta: 0.3, ..GrpoConfig::default() };
    fd_check(&group, &params, Some(&reference), &config, 30, 1002);
}

#[test]
fn surrogate_gradient_at_sampling_policy_is_reinforce() {
    let (vocab, tasks) = setup();
    let params = PolicyParameters::init(&vocab, 4, &InitConfig::default());
    let group = build_group(&params, &vocab, &tasks[2], 5, 79);
    let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
    let (_, grad) = grpo_surrogate(&group, &params, None, &config).unwrap();

    // REINFORCE form: (1/G) sum_i A_i * (1/T_i) * grad sum_t log pi.
    let g = group.rollouts.len() as f64;
    let mut expected = ParamGrad::zeros(params.vocab_size());
    let prompt = group.context.prompt();
    for (i, y) in group.rollouts.iter().enumerate() {
        let gi = grad_log_prob(&params, &prompt, y).unwrap();
        expected.axpy(group.advantages[i] / (g * y.len() as f64), &gi);
    }
    for i in 0..grad.flat_len() {
        let a = grad.get_flat(i);
        let b = expected.get_flat(i);
        assert!(
            (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0),
            "coordinate {i}: surrogate {a} vs reinforce {b}"
        );
    }
}
