//! Synthetic token vocabulary.
//!
//! Tokens are plain integer ids. The low ids are reserved for structural
//! markers (sequence control, think-span delimiters, one citation marker
//! per document slot); everything above the reserved block is a content
//! token usable by the task generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token identifier.
pub type TokenId = u32;

/// Fixed vocabulary layout: `[BOS, EOS, THINK_OPEN, THINK_CLOSE,
/// CITE(0)..CITE(max_docs), content...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Total number of token ids.
    pub size: u32,
    /// Number of citation marker slots (one per possible document).
    pub max_docs: u32,
}

const BOS: TokenId = 0;
const EOS: TokenId = 1;
const THINK_OPEN: TokenId = 2;
const THINK_CLOSE: TokenId = 3;
const CITE_BASE: TokenId = 4;

impl Vocabulary {
    /// Builds a vocabulary, checking that the reserved block plus at
    /// least two content tokens fit.
    pub fn new(size: u32, max_docs: u32) -> Result<Self> {
        if max_docs < 1 {
            return Err(Error::VocabTooSmall("max_docs must be at least 1".into()));
        }
        let reserved = CITE_BASE + max_docs;
        if size < reserved + 2 {
            return Err(Error::VocabTooSmall(format!(
                "size {size} cannot hold {reserved} reserved ids plus 2 content tokens"
            )));
        }
        Ok(Self { size, max_docs })
    }

    pub fn bos(&self) -> TokenId {
        BOS
    }

    pub fn eos(&self) -> TokenId {
        EOS
    }

    pub fn think_open(&self) -> TokenId {
        THINK_OPEN
    }

    pub fn think_close(&self) -> TokenId {
        THINK_CLOSE
    }

    /// Citation marker for document slot `doc`.
    pub fn cite(&self, doc: u32) -> Result<TokenId> {
        if doc >= self.max_docs {
            return Err(Error::InvalidTaskSpec(format!(
                "citation slot {doc} out of range (max_docs = {})",
                self.max_docs
            )));
        }
        Ok(CITE_BASE + doc)
    }

    /// First content token id.
    pub fn content_base(&self) -> TokenId {
        CITE_BASE + self.max_docs
    }

    /// Number of content tokens.
    pub fn n_content(&self) -> u32 {
        self.size - self.content_base()
    }

    /// The `k`-th content token.
    pub fn content(&self, k: u32) -> Result<TokenId> {
        if k >= self.n_content() {
            return Err(Error::InvalidToken {
                token: self.content_base() + k,
                vocab_size: self.size as usize,
            });
        }
        Ok(self.content_base() + k)
    }

    /// Display label for a token id, used by heatmap rendering.
    pub fn token_label(&self, token: TokenId) -> String {
        match token {
            BOS => "[BOS]".into(),
            EOS => "[EOS]".into(),
            THINK_OPEN => "[THINK]".into(),
            THINK_CLOSE => "[/THINK]".into(),
            t if t >= CITE_BASE && t < self.content_base() => format!("[CITE{}]", t - CITE_BASE),
            t => format!("t{t}"),
        }
    }
}
