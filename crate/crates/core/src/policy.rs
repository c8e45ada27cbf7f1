//! Conditional autoregressive toy policy.
//!
//! The policy is a log-linear copy/generate mixture over a synthetic
//! vocabulary:
//!
//! ```text
//! P(y_t | y_<t, query, docs) = (1 - f) * [ m * Copy(y_t) + (1 - m) * Uni(y_t) ] + f / V
//! ```
//!
//! where `Uni` is a softmax over per-token unigram logits, `Copy` is a
//! softmax over context token positions with hand-specified features
//! (summed over positions holding the candidate token), `m = sigmoid(g)`
//! is a log-linear gate over step features, and `f = 1e-8` is a smoothing
//! floor that keeps every log-probability finite even when a leave-one-out
//! context makes an observed token otherwise impossible.
//!
//! Copy features per context position: whether the position's token occurs
//! in the query, whether the position continues the most recently emitted
//! token (its in-segment predecessor equals the last output token), and
//! the position's relative offset inside its segment. Gate features per
//! step: a bias, a saturating step-progress term, and the fraction of the
//! prefix that occurs anywhere in the context.
//!
//! With an empty context the copy branch is undefined and the gate is
//! forced shut: the distribution is the smoothed unigram alone.
//!
//! Everything here is a pure function of immutable parameters, so scoring
//! and sampling are safe to call from many threads at once.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::{Prompt, Rollout, Termination};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::vocab::{TokenId, Vocabulary};

/// Gate feature count: bias, step progress, prefix/context overlap.
pub const GATE_FEATURES: usize = 3;
/// Copy feature count: query overlap, continuation, relative position.
pub const COPY_FEATURES: usize = 3;

/// Smoothing mass mixed uniformly into every distribution.
pub const SMOOTHING_FLOOR: f64 = 1e-8;

/// Learnable parameters of the copy/generate mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    /// Copy-gate weights over [`GATE_FEATURES`].
    pub gate: Vec<f64>,
    /// Per-token unigram logits, length `V`.
    pub unigram: Vec<f64>,
    /// Copy-attention weights over [`COPY_FEATURES`].
    pub copy: Vec<f64>,
    /// Free-form provenance tag carried through checkpoints.
    pub tag: String,
}

/// Initialization settings for [`PolicyParameters::init`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Half-width of the uniform init interval for every weight.
    pub scale: f64,
    /// Additive logit bias on EOS so untrained rollouts stay short.
    pub eos_logit: f64,
    /// Additive prior on the copy-attention weights. Plays the role of
    /// the cold-start stage: a faint preference for query-matching and
    /// span-continuing positions, weak enough that untrained rollouts
    /// still answer almost nothing, strong enough that copy chains occur
    /// and can be reinforced.
    pub copy_bias: [f64; COPY_FEATURES],
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { scale: 0.02, eos_logit: 2.0, copy_bias: [1.0, 1.5, 0.0] }
    }
}

impl PolicyParameters {
    /// All-zero parameters for a vocabulary of size `v`.
    pub fn zeros(v: usize) -> Self {
        Self {
            gate: vec![0.0; GATE_FEATURES],
            unigram: vec![0.0; v],
            copy: vec![0.0; COPY_FEATURES],
            tag: "zeros".to_string(),
        }
    }

    /// Seeded uniform init in `[-scale, scale]` plus the EOS logit bias.
    pub fn init(vocab: &Vocabulary, seed: u64, cfg: &InitConfig) -> Self {
        let mut rng = stream(seed, "policy_init", 0);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-cfg.scale..=cfg.scale)).collect()
        };
        let gate = draw(GATE_FEATURES);
        let mut unigram = draw(vocab.size as usize);
        let mut copy = draw(COPY_FEATURES);
        unigram[vocab.eos() as usize] += cfg.eos_logit;
        for (w, b) in copy.iter_mut().zip(cfg.copy_bias) {
            *w += b;
        }
        Self { gate, unigram, copy, tag: format!("init(seed={seed})") }
    }

    /// Vocabulary size implied by the unigram block.
    pub fn vocab_size(&self) -> usize {
        self.unigram.len()
    }

    /// Total number of scalar parameters.
    pub fn flat_len(&self) -> usize {
        GATE_FEATURES + self.unigram.len() + COPY_FEATURES
    }

    /// Reads the parameter at flat index `i` (gate, then unigram, then copy).
    pub fn get_flat(&self, i: usize) -> f64 {
        let v = self.unigram.len();
        if i < GATE_FEATURES {
            self.gate[i]
        } else if i < GATE_FEATURES + v {
            self.unigram[i - GATE_FEATURES]
        } else {
            self.copy[i - GATE_FEATURES - v]
        }
    }

    /// Writes the parameter at flat index `i`.
    pub fn set_flat(&mut self, i: usize, value: f64) {
        let v = self.unigram.len();
        if i < GATE_FEATURES {
            self.gate[i] = value;
        } else if i < GATE_FEATURES + v {
            self.unigram[i - GATE_FEATURES] = value;
        } else {
            self.copy[i - GATE_FEATURES - v] = value;
        }
    }

    /// In-place `self += scale * grad`.
    pub fn axpy(&mut self, scale: f64, grad: &ParamGrad) {
        for (w, g) in self.gate.iter_mut().zip(&grad.gate) {
            *w += scale * g;
        }
        for (w, g) in self.unigram.iter_mut().zip(&grad.unigram) {
            *w += scale * g;
        }
        for (w, g) in self.copy.iter_mut().zip(&grad.copy) {
            *w += scale * g;
        }
    }

    /// Mean absolute parameter value, used by the divergence guard.
    pub fn mean_abs(&self) -> f64 {
        let sum: f64 = self
            .gate
            .iter()
            .chain(&self.unigram)
            .chain(&self.copy)
            .map(|w| w.abs())
            .sum();
        sum / self.flat_len() as f64
    }

    /// Fails if any parameter is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        let all = self.gate.iter().chain(&self.unigram).chain(&self.copy);
        for (i, w) in all.enumerate() {
            if !w.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite parameter at flat index {i}")));
            }
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`PolicyParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub gate: Vec<f64>,
    pub unigram: Vec<f64>,
    pub copy: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(v: usize) -> Self {
        Self {
            gate: vec![0.0; GATE_FEATURES],
            unigram: vec![0.0; v],
            copy: vec![0.0; COPY_FEATURES],
        }
    }

    pub fn flat_len(&self) -> usize {
        GATE_FEATURES + self.unigram.len() + COPY_FEATURES
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        let v = self.unigram.len();
        if i < GATE_FEATURES {
            self.gate[i]
        } else if i < GATE_FEATURES + v {
            self.unigram[i - GATE_FEATURES]
        } else {
            self.copy[i - GATE_FEATURES - v]
        }
    }

    /// In-place `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &ParamGrad) {
        for (a, b) in self.gate.iter_mut().zip(&other.gate) {
            *a += scale * b;
        }
        for (a, b) in self.unigram.iter_mut().zip(&other.unigram) {
            *a += scale * b;
        }
        for (a, b) in self.copy.iter_mut().zip(&other.copy) {
            *a += scale * b;
        }
    }
}

/// One linearized context position with its static copy features.
struct CtxPosition {
    token: TokenId,
    /// In-segment predecessor token; `None` at segment starts, so the
    /// continuation feature never crosses query/document boundaries.
    prev_in_seg: Option<TokenId>,
    /// Static features; the continuation slot is filled per step.
    query_overlap: f64,
    rel_pos: f64,
}

/// Prompt flattened for repeated evaluation under fixed parameters.
pub struct PolicyEval<'a> {
    params: &'a PolicyParameters,
    positions: Vec<CtxPosition>,
    ctx_tokens: HashSet<TokenId>,
    /// Softmaxed unigram, precomputed once.
    uni: Vec<f64>,
}

/// Step-dependent inputs to the gate and the continuation feature.
#[derive(Debug, Clone, Copy)]
struct StepState {
    t: usize,
    last: Option<TokenId>,
    overlap: usize,
}

impl StepState {
    fn initial() -> Self {
        Self { t: 0, last: None, overlap: 0 }
    }

    fn gate_features(&self) -> [f64; GATE_FEATURES] {
        let t = self.t as f64;
        let frac = if self.t == 0 { 0.0 } else { self.overlap as f64 / t };
        [1.0, t / (t + 8.0), frac]
    }

    fn advance(&mut self, token: TokenId, in_ctx: bool) {
        self.t += 1;
        self.last = Some(token);
        if in_ctx {
            self.overlap += 1;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Per-step evaluation artifacts kept for the gradient pass.
struct StepEval {
    dist: Vec<f64>,
    /// Gate value `m`; `None` when the context has no positions.
    gate: Option<f64>,
    gate_features: [f64; GATE_FEATURES],
    /// Copy softmax over positions with its per-position features.
    copy_pos: Vec<(f64, [f64; COPY_FEATURES])>,
    /// Copy mass per token.
    copy_tok: Vec<f64>,
}

impl<'a> PolicyEval<'a> {
    pub fn new(params: &'a PolicyParameters, prompt: &Prompt) -> Result<Self> {
        let v = params.vocab_size();
        if let Some(max) = prompt.max_token() {
            if max as usize >= v {
                return Err(Error::InvalidToken { token: max, vocab_size: v });
            }
        }
        let query_set: HashSet<TokenId> = prompt.query.iter().copied().collect();
        let mut positions = Vec::with_capacity(prompt.len());
        let mut push_segment = |tokens: &[TokenId]| {
            let len = tokens.len() as f64;
            for (off, &tok) in tokens.iter().enumerate() {
                positions.push(CtxPosition {
                    token: tok,
                    prev_in_seg: (off > 0).then(|| tokens[off - 1]),
                    query_overlap: if query_set.contains(&tok) { 1.0 } else { 0.0 },
                    rel_pos: (off as f64 + 1.0) / len,
                });
            }
        };
        push_segment(&prompt.query);
        for doc in &prompt.docs {
            push_segment(doc);
        }
        let ctx_tokens = positions.iter().map(|p| p.token).collect();
        Ok(Self { params, positions, ctx_tokens, uni: softmax(&params.unigram) })
    }

    fn step(&self, state: &StepState) -> StepEval {
        let v = self.params.vocab_size();
        let gate_features = state.gate_features();
        if self.positions.is_empty() {
            let dist = self
                .uni
                .iter()
                .map(|&u| (1.0 - SMOOTHING_FLOOR) * u + SMOOTHING_FLOOR / v as f64)
                .collect();
            return StepEval {
                dist,
                gate: None,
                gate_features,
                copy_pos: Vec::new(),
                copy_tok: vec![0.0; v],
            };
        }

        let m = sigmoid(
            self.params
                .gate
                .iter()
                .zip(gate_features)
                .map(|(w, f)| w * f)
                .sum::<f64>(),
        );

        let feats: Vec<[f64; COPY_FEATURES]> = self
            .positions
            .iter()
            .map(|p| {
                let cont = match (p.prev_in_seg, state.last) {
                    (Some(prev), Some(last)) if prev == last => 1.0,
                    _ => 0.0,
                };
                [p.query_overlap, cont, p.rel_pos]
            })
            .collect();
        let scores: Vec<f64> = feats
            .iter()
            .map(|f| f.iter().zip(&self.params.copy).map(|(x, w)| x * w).sum())
            .collect();
        let probs = softmax(&scores);

        let mut copy_tok = vec![0.0; v];
        for (p, pos) in probs.iter().zip(&self.positions) {
            copy_tok[pos.token as usize] += p;
        }

        let dist = self
            .uni
            .iter()
            .zip(&copy_tok)
            .map(|(&u, &c)| {
                (1.0 - SMOOTHING_FLOOR) * (m * c + (1.0 - m) * u) + SMOOTHING_FLOOR / v as f64
            })
            .collect();

        StepEval {
            dist,
            gate: Some(m),
            gate_features,
            copy_pos: probs.into_iter().zip(feats).collect(),
            copy_tok,
        }
    }

    fn in_ctx(&self, token: TokenId) -> bool {
        self.ctx_tokens.contains(&token)
    }

    /// Accumulates `weight * d log P(observed) / d theta` into `grad`.
    fn accumulate_grad(&self, eval: &StepEval, observed: TokenId, weight: f64, grad: &mut ParamGrad) {
        let v = observed as usize;
        let p = eval.dist[v];
        let coef = weight * (1.0 - SMOOTHING_FLOOR) / p;
        let uni_v = self.uni[v];

        let Some(m) = eval.gate else {
            // Empty context: the gate is forced shut, only the unigram
            // block receives gradient.
            let cu = coef * uni_v;
            grad.unigram[v] += cu;
            for (g, &u) in grad.unigram.iter_mut().zip(&self.uni) {
                *g -= cu * u;
            }
            return;
        };

        let copy_v = eval.copy_tok[v];
        let dg = coef * m * (1.0 - m) * (copy_v - uni_v);
        for (g, f) in grad.gate.iter_mut().zip(eval.gate_features) {
            *g += dg * f;
        }

        let cu = coef * (1.0 - m) * uni_v;
        grad.unigram[v] += cu;
        for (g, &u) in grad.unigram.iter_mut().zip(&self.uni) {
            *g -= cu * u;
        }

        let mut mean_feat = [0.0; COPY_FEATURES];
        for (p_j, f_j) in &eval.copy_pos {
            for (mf, f) in mean_feat.iter_mut().zip(f_j) {
                *mf += p_j * f;
            }
        }
        let cm = coef * m;
        for ((p_j, f_j), pos) in eval.copy_pos.iter().zip(&self.positions) {
            if pos.token == observed {
                for (g, (f, mf)) in grad.copy.iter_mut().zip(f_j.iter().zip(mean_feat)) {
                    *g += cm * p_j * (f - mf);
                }
            }
        }
    }
}

/// Step-by-step evaluation of a fixed token sequence under fixed
/// parameters, retaining every per-step distribution so the trainer can
/// form weighted policy-gradient terms and exact KL terms.
pub(crate) struct SequenceEvaluation<'a> {
    eval: PolicyEval<'a>,
    steps: Vec<StepEval>,
    tokens: Vec<TokenId>,
}

impl<'a> SequenceEvaluation<'a> {
    pub(crate) fn new(
        params: &'a PolicyParameters,
        prompt: &Prompt,
        tokens: &[TokenId],
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyRollout);
        }
        check_tokens(tokens, params.vocab_size())?;
        let eval = PolicyEval::new(params, prompt)?;
        let mut state = StepState::initial();
        let mut steps = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            steps.push(eval.step(&state));
            state.advance(tok, eval.in_ctx(tok));
        }
        Ok(Self { eval, steps, tokens: tokens.to_vec() })
    }

    /// Distribution over the next token at step `t`.
    pub(crate) fn dist(&self, t: usize) -> &[f64] {
        &self.steps[t].dist
    }

    /// Log-probability of the observed token at step `t`.
    pub(crate) fn logprob(&self, t: usize) -> f64 {
        self.steps[t].dist[self.tokens[t] as usize].ln()
    }

    /// `grad += weight * d log P(token_t) / d theta`.
    pub(crate) fn add_grad_logp(&self, t: usize, weight: f64, grad: &mut ParamGrad) {
        self.eval.accumulate_grad(&self.steps[t], self.tokens[t], weight, grad);
    }

    /// `grad += sum_v coeffs[v] * d P_v / d theta` at step `t`, using
    /// `dP_v = P_v * d log P_v`.
    pub(crate) fn add_grad_over_vocab(&self, t: usize, coeffs: &[f64], grad: &mut ParamGrad) {
        let step = &self.steps[t];
        for (v, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                let w = c * step.dist[v];
                self.eval.accumulate_grad(step, v as TokenId, w, grad);
            }
        }
    }
}

fn check_tokens(tokens: &[TokenId], v: usize) -> Result<()> {
    for &t in tokens {
        if t as usize >= v {
            return Err(Error::InvalidToken { token: t, vocab_size: v });
        }
    }
    Ok(())
}

/// Distribution over the next token given a prefix. Sums to one within
/// 1e-12 and every entry is strictly positive.
pub fn next_token_distribution(
    params: &PolicyParameters,
    prompt: &Prompt,
    prefix: &[TokenId],
) -> Result<Vec<f64>> {
    check_tokens(prefix, params.vocab_size())?;
    let eval = PolicyEval::new(params, prompt)?;
    let mut state = StepState::initial();
    for &tok in prefix {
        state.advance(tok, eval.in_ctx(tok));
    }
    Ok(eval.step(&state).dist)
}

/// Per-token log-probabilities of a rollout and their sum.
pub fn log_prob_sequence(
    params: &PolicyParameters,
    prompt: &Prompt,
    rollout: &Rollout,
) -> Result<(Vec<f64>, f64)> {
    if rollout.is_empty() {
        return Err(Error::EmptyRollout);
    }
    check_tokens(&rollout.tokens, params.vocab_size())?;
    let eval = PolicyEval::new(params, prompt)?;
    let mut state = StepState::initial();
    let mut logps = Vec::with_capacity(rollout.len());
    for &tok in &rollout.tokens {
        let step = eval.step(&state);
        logps.push(step.dist[tok as usize].ln());
        state.advance(tok, eval.in_ctx(tok));
    }
    let sum = logps.iter().sum();
    Ok((logps, sum))
}

/// Samples a rollout; deterministic for fixed `(params, prompt, seed)`.
/// Generation stops at `eos` or after `max_len` tokens.
pub fn sample_rollout(
    params: &PolicyParameters,
    prompt: &Prompt,
    max_len: usize,
    eos: TokenId,
    seed: u64,
) -> Result<Rollout> {
    if max_len == 0 {
        return Err(Error::InvalidTaskSpec("max_len must be at least 1".into()));
    }
    if eos as usize >= params.vocab_size() {
        return Err(Error::InvalidToken { token: eos, vocab_size: params.vocab_size() });
    }
    let eval = PolicyEval::new(params, prompt)?;
    let mut rng = stream(seed, "sample_rollout", 0);
    let mut state = StepState::initial();
    let mut tokens = Vec::new();
    let mut terminated_by = Termination::MaxLen;
    for _ in 0..max_len {
        let dist = eval.step(&state).dist;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut pick = dist.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            cum += p;
            if u < cum {
                pick = i;
                break;
            }
        }
        let tok = pick as TokenId;
        tokens.push(tok);
        state.advance(tok, eval.in_ctx(tok));
        if tok == eos {
            terminated_by = Termination::Eos;
            break;
        }
    }
    Ok(Rollout { tokens, terminated_by, seed: Some(seed) })
}

/// Analytic gradient of the rollout's summed log-probability.
pub fn grad_log_prob(
    params: &PolicyParameters,
    prompt: &Prompt,
    rollout: &Rollout,
) -> Result<ParamGrad> {
    if rollout.is_empty() {
        return Err(Error::EmptyRollout);
    }
    check_tokens(&rollout.tokens, params.vocab_size())?;
    let eval = PolicyEval::new(params, prompt)?;
    let mut state = StepState::initial();
    let mut grad = ParamGrad::zeros(params.vocab_size());
    for &tok in &rollout.tokens {
        let step = eval.step(&state);
        eval.accumulate_grad(&step, tok, 1.0, &mut grad);
        state.advance(tok, eval.in_ctx(tok));
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

/// Policy checkpoint: parameters plus the vocabulary they were trained
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParameters,
    pub vocab: Vocabulary,
}

const CHECKPOINT_MAGIC: &str = "clr-policy-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    /// Serializes to the key/value text format. Floats are written with
    /// 17 significant digits so the round trip is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "format_version {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "tag {}", self.params.tag);
        let _ = writeln!(out, "vocab_size {}", self.vocab.size);
        let _ = writeln!(out, "max_docs {}", self.vocab.max_docs);
        let mut block = |name: &str, values: &[f64]| {
            let _ = writeln!(out, "{name} {}", values.len());
            for v in values {
                let _ = writeln!(out, "{v:.16e}");
            }
        };
        block("gate", &self.params.gate);
        block("unigram", &self.params.unigram);
        block("copy", &self.params.copy);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header line"));
        }
        let version_line = lines.next().ok_or_else(|| bad("missing format_version"))?;
        let version: u32 = version_line
            .strip_prefix("format_version ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("malformed format_version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format_version {version}")));
        }
        let tag = lines
            .next()
            .and_then(|l| l.strip_prefix("tag "))
            .ok_or_else(|| bad("missing tag"))?
            .to_string();
        let mut scalar = |key: &str| -> Result<u32> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing or malformed {key}")))
        };
        let size = scalar("vocab_size ")?;
        let max_docs = scalar("max_docs ")?;
        let vocab = Vocabulary::new(size, max_docs)?;

        let mut read_block = |name: &str, expected: Option<usize>| -> Result<Vec<f64>> {
            let header = lines.next().ok_or_else(|| Error::Checkpoint(format!("missing {name} block")))?;
            let len: usize = header
                .strip_prefix(name)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("malformed {name} header")))?;
            if let Some(exp) = expected {
                if len != exp {
                    return Err(Error::Checkpoint(format!(
                        "{name} block has length {len}, expected {exp}"
                    )));
                }
            }
            let mut values = Vec::with_capacity(len);
            for i in 0..len {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Checkpoint(format!("{name} block truncated at {i}")))?;
                let v: f64 = line
                    .trim()
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad float in {name} at {i}")))?;
                values.push(v);
            }
            Ok(values)
        };
        let gate = read_block("gate", Some(GATE_FEATURES))?;
        let unigram = read_block("unigram", Some(size as usize))?;
        let copy = read_block("copy", Some(COPY_FEATURES))?;
        let params = PolicyParameters { gate, unigram, copy, tag };
        params.check_finite()?;
        Ok(Self { params, vocab })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}
