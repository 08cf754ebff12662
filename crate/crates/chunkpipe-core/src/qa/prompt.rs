//! MCP prompt construction and single-token answer parsing.
//!
//! One canonical template, variants only through the symbol set: small
//! models are highly sensitive to prompt wording, so the wording is fixed
//! here rather than configurable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{McqaItem, QaError};
use crate::ranker::ContextBlock;

/// Which symbols label the options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolSetId {
    Numeric,
    Alpha,
}

impl std::str::FromStr for SymbolSetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(SymbolSetId::Numeric),
            "alpha" => Ok(SymbolSetId::Alpha),
            other => Err(format!("unknown symbol set {other:?} (expected numeric or alpha)")),
        }
    }
}

/// The five option symbols plus the word naming them in the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolSet {
    pub id: SymbolSetId,
    pub symbols: [&'static str; 5],
}

pub const NUMERIC: SymbolSet =
    SymbolSet { id: SymbolSetId::Numeric, symbols: ["1", "2", "3", "4", "5"] };
pub const ALPHA: SymbolSet =
    SymbolSet { id: SymbolSetId::Alpha, symbols: ["A", "B", "C", "D", "E"] };

impl SymbolSet {
    pub fn get(id: SymbolSetId) -> &'static SymbolSet {
        match id {
            SymbolSetId::Numeric => &NUMERIC,
            SymbolSetId::Alpha => &ALPHA,
        }
    }

    fn instruction_word(&self) -> &'static str {
        match self.id {
            SymbolSetId::Numeric => "number",
            SymbolSetId::Alpha => "letter",
        }
    }
}

/// Render the canonical MCP prompt: optional context, question,
/// symbol-labeled options, and the single-token answer instruction. The
/// context block is omitted entirely when empty.
pub fn build_prompt(
    item: &McqaItem,
    context: &ContextBlock,
    symbols: &SymbolSet,
) -> Result<String, QaError> {
    if item.options.len() > symbols.symbols.len() {
        return Err(QaError::TooManyOptions {
            options: item.options.len(),
            symbols: symbols.symbols.len(),
        });
    }
    let mut prompt = String::new();
    if !context.is_empty() {
        prompt.push_str("Context:\n");
        prompt.push_str(&context.text);
        prompt.push_str("\n\n");
    }
    prompt.push_str("Question: ");
    prompt.push_str(&item.question);
    prompt.push_str("\n\nOptions:\n");
    for (symbol, option) in symbols.symbols.iter().zip(&item.options) {
        prompt.push_str(symbol);
        prompt.push_str(") ");
        prompt.push_str(option);
        prompt.push('\n');
    }
    prompt.push_str("\nAnswer with only the ");
    prompt.push_str(symbols.instruction_word());
    prompt.push_str(" of the correct option.\nAnswer:");
    Ok(prompt)
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum AnswerParseError {
    #[error("reply {raw:?} does not start with a valid option symbol")]
    Unparseable { raw: String },
    #[error("symbol {symbol:?} is valid but beyond the {n_options} options")]
    OutOfRange { symbol: String, n_options: usize },
}

/// Parse a model reply into an option index: strip leading whitespace and
/// punctuation, then the first token must equal one of the first `n_options`
/// symbols (case-sensitive for letters).
pub fn parse_answer(
    raw: &str,
    symbols: &SymbolSet,
    n_options: usize,
) -> Result<usize, AnswerParseError> {
    let stripped =
        raw.trim_start_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation());
    let token_end = stripped
        .char_indices()
        .find(|(_, c)| c.is_whitespace() || c.is_ascii_punctuation())
        .map_or(stripped.len(), |(i, _)| i);
    let token = &stripped[..token_end];
    if token.is_empty() {
        return Err(AnswerParseError::Unparseable { raw: raw.to_string() });
    }
    match symbols.symbols.iter().position(|&s| s == token) {
        Some(i) if i < n_options => Ok(i),
        Some(_) => Err(AnswerParseError::OutOfRange { symbol: token.to_string(), n_options }),
        None => Err(AnswerParseError::Unparseable { raw: raw.to_string() }),
    }
}
