//! Default corpus tokenizer: split on whitespace, isolate ASCII punctuation.
//!
//! Token counts drive the chunk window budget and the context budget, so the
//! tokenizer must be deterministic and model-free. Tokens carry byte offsets
//! into the source text so windows can be cut back out of the original string
//! verbatim. Slicing at token boundaries re-tokenizes to exactly the same
//! token sequence: tokens never contain whitespace and punctuation tokens are
//! single characters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of the default tokenizer, recorded in [`crate::ChunkPolicy`].
pub const DEFAULT_TOKENIZER_ID: &str = "ws-punct-v1";

/// A token plus its byte span in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error)]
#[error("unknown tokenizer id: {0:?}")]
pub struct UnknownTokenizer(pub String);

/// Tokenizer selected by id. Only `ws-punct-v1` is built in; the id is kept
/// on policies and artifacts so corpora built with a different tokenizer are
/// never silently mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tokenizer {
    WsPunct,
}

impl Tokenizer {
    pub fn from_id(id: &str) -> Result<Self, UnknownTokenizer> {
        match id {
            DEFAULT_TOKENIZER_ID => Ok(Tokenizer::WsPunct),
            other => Err(UnknownTokenizer(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        DEFAULT_TOKENIZER_ID
    }

    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<Token<'a>> {
        tokenize(text)
    }

    pub fn count(&self, text: &str) -> usize {
        tokenize(text).len()
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::WsPunct
    }
}

/// Split `text` into tokens: maximal runs of non-whitespace, non-punctuation
/// characters, with each ASCII punctuation character emitted as its own token.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = word_start.take() {
                tokens.push(Token { text: &text[s..i], start: s, end: i });
            }
        } else if ch.is_ascii_punctuation() {
            if let Some(s) = word_start.take() {
                tokens.push(Token { text: &text[s..i], start: s, end: i });
            }
            let end = i + ch.len_utf8();
            tokens.push(Token { text: &text[i..end], start: i, end });
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        tokens.push(Token { text: &text[s..], start: s, end: text.len() });
    }
    tokens
}

/// Number of tokens in `text` under the default tokenizer.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

/// Lowercased token texts, as used by the mock embedder and the Jaccard
/// scoring rubric.
pub fn lowercase_tokens(text: &str) -> Vec<String> {
    tokenize(text).iter().map(|t| t.text.to_lowercase()).collect()
}
