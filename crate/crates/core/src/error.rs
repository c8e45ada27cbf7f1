//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by policy evaluation, reward computation, task
/// generation, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A token id is outside the vocabulary.
    #[error("invalid token id {token}: vocabulary size is {vocab_size}")]
    InvalidToken { token: u32, vocab_size: usize },

    /// An operation requires a non-empty rollout.
    #[error("rollout must contain at least one token")]
    EmptyRollout,

    /// Reward computation requires at least one supporting document.
    #[error("context has no supporting document")]
    NoSupportingDocument,

    /// Citation reward requires a non-empty supporting set.
    #[error("supporting id set is empty")]
    EmptySupportingSet,

    /// A likelihood profile does not match the rollout or context shape.
    #[error("malformed likelihood profile: {0}")]
    MalformedProfile(String),

    /// Paired vectors disagree in length.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// KL regularization was requested without a reference policy.
    #[error("kl_beta > 0 requires reference policy parameters")]
    MissingReference,

    /// Training aborted because parameters grew past the divergence bound.
    #[error("training diverged at step {step}: mean |param| = {mean_abs:.3e} exceeds bound {bound:.3e}")]
    Diverged { step: usize, mean_abs: f64, bound: f64 },

    /// The vocabulary cannot satisfy the requested reserved layout.
    #[error("vocabulary too small: {0}")]
    VocabTooSmall(String),

    /// A task specification violates its invariants.
    #[error("invalid task spec: {0}")]
    InvalidTaskSpec(String),

    /// Task generation cannot satisfy the construction invariants.
    #[error("task generation failed: {0}")]
    Generation(String),

    /// Dataset filtering could not fill the requested strata.
    #[error("{0}")]
    FilterShortfall(ShortfallReport),

    /// A checkpoint file failed to parse.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Per-stratum accounting for a failed dataset filter.
///
/// Reported instead of silently padding when a stratum has fewer
/// candidates than the stratified take requires.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortfallReport {
    /// Samples requested from the in-band stratum.
    pub band_requested: usize,
    /// Samples available in the in-band stratum.
    pub band_available: usize,
    /// Samples requested from the full-pass stratum.
    pub full_requested: usize,
    /// Samples available in the full-pass stratum.
    pub full_available: usize,
}

impl std::fmt::Display for ShortfallReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "stratum shortfall: band stratum has {}/{} samples, full-pass stratum has {}/{}",
            self.band_available, self.band_requested, self.full_available, self.full_requested
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
