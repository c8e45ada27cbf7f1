//! Retrieval contexts and rollouts.
//!
//! A [`RagContext`] carries the query plus the ordered retrieved documents
//! with their supporting/noisy labels. Labels exist for reward computation
//! only; the policy sees a [`Prompt`], a view with the labels stripped, so
//! label blindness is structural rather than a convention.
//!
//! Prompt linearization order is fixed: query tokens first, then each
//! document's tokens in list order. No delimiter tokens are inserted;
//! segment boundaries are tracked structurally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// One retrieved document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// 0-based id, contiguous within its context.
    pub id: u32,
    /// Token stream; never empty.
    pub tokens: Vec<TokenId>,
    /// Whether this document carries evidence for the answer.
    #[serde(rename = "supporting")]
    pub is_supporting: bool,
}

/// Query plus ordered labeled documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagContext {
    pub query: Vec<TokenId>,
    pub documents: Vec<Document>,
}

impl RagContext {
    /// Checks structural invariants: contiguous 0-based doc ids and
    /// non-empty document token streams.
    pub fn validate(&self) -> Result<()> {
        for (i, doc) in self.documents.iter().enumerate() {
            if doc.id as usize != i {
                return Err(Error::InvalidTaskSpec(format!(
                    "document ids must be 0-based and contiguous; position {i} has id {}",
                    doc.id
                )));
            }
            if doc.tokens.is_empty() {
                return Err(Error::InvalidTaskSpec(format!("document {i} is empty")));
            }
        }
        Ok(())
    }

    /// Ids of the supporting documents, in list order.
    pub fn supporting_ids(&self) -> Vec<u32> {
        self.documents
            .iter()
            .filter(|d| d.is_supporting)
            .map(|d| d.id)
            .collect()
    }

    /// Label-stripped view handed to the policy.
    pub fn prompt(&self) -> Prompt {
        Prompt {
            query: self.query.clone(),
            docs: self.documents.iter().map(|d| d.tokens.clone()).collect(),
        }
    }

    /// Label-stripped view with document `doc_id` removed; remaining
    /// documents keep their order.
    pub fn prompt_without(&self, doc_id: u32) -> Prompt {
        Prompt {
            query: self.query.clone(),
            docs: self
                .documents
                .iter()
                .filter(|d| d.id != doc_id)
                .map(|d| d.tokens.clone())
                .collect(),
        }
    }

    /// Copy of this context with every document removed (question-only
    /// evaluation).
    pub fn without_documents(&self) -> RagContext {
        RagContext {
            query: self.query.clone(),
            documents: Vec::new(),
        }
    }
}

/// What the policy conditions on: query and document token streams, no
/// labels, no ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub query: Vec<TokenId>,
    pub docs: Vec<Vec<TokenId>>,
}

impl Prompt {
    /// Total number of context token positions.
    pub fn len(&self) -> usize {
        self.query.len() + self.docs.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest token id present, for vocabulary validation.
    pub fn max_token(&self) -> Option<TokenId> {
        self.query
            .iter()
            .chain(self.docs.iter().flatten())
            .copied()
            .max()
    }
}

/// How a rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The policy emitted the end-of-sequence token.
    Eos,
    /// Generation hit the maximum-length cap.
    MaxLen,
}

/// A sampled token sequence with its sampling metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollout {
    pub tokens: Vec<TokenId>,
    pub terminated_by: Termination,
    /// Seed of the sampling stream; `None` for externally supplied
    /// sequences.
    pub seed: Option<u64>,
}

impl Rollout {
    /// Wraps an externally supplied token sequence, inferring the
    /// termination kind from the final token.
    pub fn from_tokens(tokens: Vec<TokenId>, eos: TokenId) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyRollout);
        }
        let terminated_by = if *tokens.last().expect("non-empty") == eos {
            Termination::Eos
        } else {
            Termination::MaxLen
        };
        Ok(Self { tokens, terminated_by, seed: None })
    }

    /// Token count `T`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
