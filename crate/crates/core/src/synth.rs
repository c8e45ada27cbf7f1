//! Seeded synthetic retrieval-QA tasks and their evaluation metrics.
//!
//! Each task is a needle-in-a-haystack construction over the synthetic
//! vocabulary. The query is `[question marker, key]`. Single-hop tasks
//! colocate the key with a two-token answer inside each supporting
//! document; two-hop tasks chain `key -> bridge` in the first supporting
//! document and `bridge -> answer` in the second, so removing either
//! document breaks the chain. Noisy documents are filler streams drawn
//! from a pool that excludes the question marker, key, bridge, and answer
//! tokens. Every document opens with its own citation marker, which makes
//! citation recall learnable by copying.
//!
//! Evaluation mirrors the trainer's sampling: accuracy with and without
//! documents under paired seeds, their difference (Reference Reliance),
//! and the sequence/token perplexity forms of the full and leave-one-out
//! likelihoods.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::{Document, RagContext, Rollout};
use crate::error::{Error, Result};
use crate::policy::{sample_rollout, PolicyParameters};
use crate::reward::clr::{likelihood_profile, LooMode};
use crate::reward::rules::correctness_reward;
use crate::rng::stream;
use crate::vocab::{TokenId, Vocabulary};

/// Number of answer tokens per task.
const ANSWER_LEN: usize = 2;

/// Parameters of a generated task set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub n_docs: usize,
    pub n_supporting: usize,
    /// 1 for key/answer colocation, 2 for a bridged chain.
    pub hops: u8,
    /// Tokens per document, including its citation marker.
    pub doc_len: usize,
    pub vocab: Vocabulary,
    pub n_tasks: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_supporting < 1 || self.n_supporting > self.n_docs {
            return Err(Error::InvalidTaskSpec(format!(
                "need 1 <= n_supporting <= n_docs, got {} of {}",
                self.n_supporting, self.n_docs
            )));
        }
        match self.hops {
            1 => {}
            2 => {
                if self.n_supporting != 2 {
                    return Err(Error::InvalidTaskSpec(
                        "hops = 2 requires exactly 2 supporting documents".into(),
                    ));
                }
            }
            h => return Err(Error::InvalidTaskSpec(format!("hops must be 1 or 2, got {h}"))),
        }
        if self.n_docs > self.vocab.max_docs as usize {
            return Err(Error::InvalidTaskSpec(format!(
                "n_docs {} exceeds vocabulary citation slots {}",
                self.n_docs, self.vocab.max_docs
            )));
        }
        // Fact span per supporting doc: marker + key + answer (+ bridge).
        let fact = 1 + 1 + ANSWER_LEN + usize::from(self.hops == 2);
        if self.doc_len < fact {
            return Err(Error::InvalidTaskSpec(format!(
                "doc_len {} cannot hold the {fact}-token fact span",
                self.doc_len
            )));
        }
        Ok(())
    }
}

/// One generated question with its labeled context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub context: RagContext,
    pub answer: Vec<TokenId>,
    /// Chain token for two-hop tasks.
    pub bridge: Option<TokenId>,
    pub seed: u64,
}

/// Generates `spec.n_tasks` instances; deterministic for a fixed seed.
pub fn gen_tasks(spec: &TaskSpec) -> Result<Vec<TaskInstance>> {
    spec.validate()?;
    let vocab = &spec.vocab;
    // Distinct special tokens per task: marker, key, answer, bridge.
    let specials = 2 + ANSWER_LEN + usize::from(spec.hops == 2);
    let n_content = vocab.n_content() as usize;
    if n_content < specials + 1 {
        return Err(Error::Generation(format!(
            "vocabulary has {n_content} content tokens; need {specials} special tokens plus a \
             non-empty filler pool to keep answer and bridge out of noise"
        )));
    }
    (0..spec.n_tasks)
        .map(|i| gen_one(spec, i as u64))
        .collect()
}

fn gen_one(spec: &TaskSpec, index: u64) -> Result<TaskInstance> {
    let vocab = &spec.vocab;
    let mut rng = stream(spec.seed, "gen_task", index);

    // The question marker is shared across the task set; the remaining
    // special tokens are drawn fresh per task.
    let qmark = vocab.content(0)?;
    let specials = 1 + ANSWER_LEN + usize::from(spec.hops == 2);
    let mut pool: Vec<TokenId> = (1..vocab.n_content())
        .map(|k| vocab.content(k))
        .collect::<Result<_>>()?;
    pool.shuffle(&mut rng);
    let drawn: Vec<TokenId> = pool.drain(..specials).collect();
    let key = drawn[0];
    let answer: Vec<TokenId> = drawn[1..1 + ANSWER_LEN].to_vec();
    let bridge = (spec.hops == 2).then(|| drawn[1 + ANSWER_LEN]);
    // `pool` now holds only filler tokens: disjoint from the question
    // marker, key, answer, and bridge.

    let mut supporting_slots: Vec<usize> = (0..spec.n_docs).collect();
    supporting_slots.shuffle(&mut rng);
    supporting_slots.truncate(spec.n_supporting);
    supporting_slots.sort_unstable();

    // Noise bodies come first so supporting-document filler can be drawn
    // from tokens that provably occur in noise. That keeps the fact span
    // as the only part of a supporting document whose removal is
    // irrecoverable, which is exactly what leave-one-out scoring should
    // detect.
    let body_len = spec.doc_len - 1;
    let noise_bodies: Vec<Vec<TokenId>> = (0..spec.n_docs - spec.n_supporting)
        .map(|_| (0..body_len).map(|_| pool[rng.random_range(0..pool.len())]).collect())
        .collect();
    let mut shared: Vec<TokenId> = noise_bodies.iter().flatten().copied().collect();
    shared.sort_unstable();
    shared.dedup();
    let filler_source: &[TokenId] = if shared.is_empty() { &pool } else { &shared };

    let mut documents = Vec::with_capacity(spec.n_docs);
    let mut support_rank = 0usize;
    let mut noise_rank = 0usize;
    for id in 0..spec.n_docs {
        let is_supporting = supporting_slots.contains(&id);
        let mut tokens = vec![vocab.cite(id as u32)?];
        if is_supporting {
            let fact = match (spec.hops, support_rank) {
                (1, _) => {
                    let mut f = vec![key];
                    f.extend(&answer);
                    f
                }
                (2, 0) => vec![key, bridge.expect("two-hop")],
                (2, _) => {
                    let mut f = vec![bridge.expect("two-hop")];
                    f.extend(&answer);
                    f
                }
                _ => unreachable!("validated hops"),
            };
            support_rank += 1;
            let filler_n = body_len - fact.len();
            let filler: Vec<TokenId> = (0..filler_n)
                .map(|_| filler_source[rng.random_range(0..filler_source.len())])
                .collect();
            let at = rng.random_range(0..=filler_n);
            tokens.extend(&filler[..at]);
            tokens.extend(&fact);
            tokens.extend(&filler[at..]);
        } else {
            tokens.extend(&noise_bodies[noise_rank]);
            noise_rank += 1;
        }
        debug_assert_eq!(tokens.len(), spec.doc_len);
        documents.push(Document { id: id as u32, tokens, is_supporting });
    }

    let instance = TaskInstance {
        context: RagContext { query: vec![qmark, key], documents },
        answer,
        bridge,
        seed: spec.seed,
    };
    validate_instance(&instance, spec)?;
    Ok(instance)
}

/// Checks the construction invariants of a generated instance.
pub fn validate_instance(instance: &TaskInstance, spec: &TaskSpec) -> Result<()> {
    instance.context.validate()?;
    let fail = |msg: String| Err(Error::Generation(msg));
    let supporting: Vec<&Document> =
        instance.context.documents.iter().filter(|d| d.is_supporting).collect();
    if supporting.is_empty() {
        return fail("no supporting document".into());
    }

    let contains_span = |doc: &Document, span: &[TokenId]| {
        doc.tokens.windows(span.len()).any(|w| w == span)
    };
    if !supporting.iter().any(|d| contains_span(d, &instance.answer)) {
        return fail("answer span missing from every supporting document".into());
    }
    for doc in &instance.context.documents {
        if !doc.is_supporting
            && doc.tokens.iter().any(|t| instance.answer.contains(t))
        {
            return fail(format!("answer token leaked into noisy document {}", doc.id));
        }
    }

    if spec.hops == 2 {
        let bridge = instance
            .bridge
            .ok_or_else(|| Error::Generation("two-hop instance missing bridge".into()))?;
        let holders: Vec<u32> = instance
            .context
            .documents
            .iter()
            .filter(|d| d.tokens.contains(&bridge))
            .map(|d| d.id)
            .collect();
        let expected: Vec<u32> = supporting.iter().map(|d| d.id).collect();
        if holders != expected {
            return fail(format!(
                "bridge must appear in exactly the supporting documents {expected:?}, found in {holders:?}"
            ));
        }
        if supporting[0].tokens.iter().any(|t| instance.answer.contains(t)) {
            return fail("answer must appear only in the second supporting document".into());
        }
        if !contains_span(supporting[1], &instance.answer) {
            return fail("answer span missing from the second supporting document".into());
        }
    }
    Ok(())
}

/// Fraction of tasks answered correctly by any of `k_samples` seeded
/// rollouts. With `with_docs = false` the context is evaluated with every
/// document removed.
pub fn accuracy(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    tasks: &[TaskInstance],
    with_docs: bool,
    k_samples: usize,
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidTaskSpec("accuracy needs a non-empty task set".into()));
    }
    let mut correct = 0usize;
    for (ti, task) in tasks.iter().enumerate() {
        let context =
            if with_docs { task.context.clone() } else { task.context.without_documents() };
        let prompt = context.prompt();
        let mut hit = false;
        for j in 0..k_samples {
            // Rollout seeds are paired between the with-docs and
            // without-docs calls so Reference Reliance is a paired
            // difference.
            let roll_seed = stream(seed, "accuracy", (ti * k_samples + j) as u64).random();
            let y = sample_rollout(params, &prompt, max_len, vocab.eos(), roll_seed)?;
            if correctness_reward(&y, &task.answer, vocab)? == 1 {
                hit = true;
                break;
            }
        }
        if hit {
            correct += 1;
        }
    }
    Ok(correct as f64 / tasks.len() as f64)
}

/// Reference Reliance: accuracy with documents minus accuracy without,
/// over the same tasks and paired rollout seeds.
pub fn reference_reliance(
    params: &PolicyParameters,
    vocab: &Vocabulary,
    tasks: &[TaskInstance],
    k_samples: usize,
    max_len: usize,
    seed: u64,
) -> Result<f64> {
    let with = accuracy(params, vocab, tasks, true, k_samples, max_len, seed)?;
    let without = accuracy(params, vocab, tasks, false, k_samples, max_len, seed)?;
    Ok(with - without)
}

/// Sequence- and token-level perplexities of one rollout under the full
/// and leave-one-out contexts: `exp(-S)`, `exp(-S/T)`, and the same for
/// the pooled LOO score under `loo_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perplexities {
    pub ppl_full_seq: f64,
    pub ppl_full_tok: f64,
    pub ppl_loo_seq: f64,
    pub ppl_loo_tok: f64,
}

pub fn perplexities(
    params: &PolicyParameters,
    context: &RagContext,
    rollout: &Rollout,
    loo_mode: LooMode,
) -> Result<Perplexities> {
    let profile = likelihood_profile(params, context, rollout)?;
    let s_full: f64 = profile.full.iter().sum();
    let loo_sums: Vec<f64> = profile.loo.values().map(|v| v.iter().sum()).collect();
    let s_loo = match loo_mode {
        LooMode::Min => loo_sums.iter().copied().fold(f64::INFINITY, f64::min),
        LooMode::Avg => loo_sums.iter().sum::<f64>() / loo_sums.len() as f64,
    };
    let t = rollout.len() as f64;
    Ok(Perplexities {
        ppl_full_seq: (-s_full).exp(),
        ppl_full_tok: (-s_full / t).exp(),
        ppl_loo_seq: (-s_loo).exp(),
        ppl_loo_tok: (-s_loo / t).exp(),
    })
}

/// Serializes tasks as one JSON object per line.
pub fn tasks_to_jsonl(tasks: &[TaskInstance]) -> Result<String> {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&serde_json::to_string(task)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a line-delimited task file.
pub fn tasks_from_jsonl(text: &str) -> Result<Vec<TaskInstance>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
