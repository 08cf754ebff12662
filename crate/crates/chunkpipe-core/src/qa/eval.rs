//! Accuracy evaluation: retrieve, optionally re-rank, assemble, prompt,
//! generate, parse, score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, parse_answer, SymbolSet, SymbolSetId};
use super::{McqaItem, QaError};
use crate::clients::{EmbedClient, GenerateClient, ScoreClient};
use crate::corpus::ChunkStore;
use crate::embedx::{EmbeddingVector, VectorIndex};
use crate::ranker::{assemble_context, filter_and_order, score_hits, ContextBlock, ContextSelection, RankerError};

/// Generation budget for a single-symbol answer.
pub const MAX_ANSWER_TOKENS: usize = 8;

/// Where the prompt context comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextSource {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "retrieved")]
    Retrieved,
    #[serde(rename = "retrieved+crr")]
    RetrievedCrr,
}

impl std::str::FromStr for ContextSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ContextSource::None),
            "retrieved" => Ok(ContextSource::Retrieved),
            "retrieved+crr" | "retrieved-crr" => Ok(ContextSource::RetrievedCrr),
            other => Err(format!(
                "unknown context source {other:?} (expected none, retrieved or retrieved+crr)"
            )),
        }
    }
}

/// Evaluation settings, fingerprinted into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub context_source: ContextSource,
    pub symbol_set: SymbolSetId,
    pub retrieval_k: usize,
    pub budget_tokens: usize,
    pub config_fingerprint: String,
    pub seed: u64,
}

/// Everything an evaluation run may need. The retrieval-side dependencies
/// stay `None` for the no-context arm, which must never touch them.
pub struct EvalDeps<'a> {
    pub generator: &'a dyn GenerateClient,
    pub embedder: Option<&'a dyn EmbedClient>,
    pub scorer: Option<&'a dyn ScoreClient>,
    pub index: Option<&'a VectorIndex>,
    pub store: Option<&'a ChunkStore>,
}

/// Per-item record of exactly what the model saw and answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemTrace {
    pub item_id: String,
    pub context_chunk_ids: Vec<String>,
    pub prompt: String,
    pub raw_output: String,
    pub parsed_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub correct: bool,
}

/// Accuracy plus the full per-item trace, ordered by item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_items: usize,
    pub config_fingerprint: String,
    pub seed: u64,
    pub traces: Vec<ItemTrace>,
}

enum ItemError {
    /// A model endpoint failed; evaluation aborts but completed traces are
    /// kept so the caller can persist a partial trace.
    Client(String),
    Other(QaError),
}

impl From<QaError> for ItemError {
    fn from(e: QaError) -> Self {
        match e {
            QaError::Embedx(crate::embedx::EmbedxError::EmbedFailed(inner)) => {
                ItemError::Client(inner.to_string())
            }
            QaError::Ranker(RankerError::ScorerUnavailable(inner))
            | QaError::Ranker(RankerError::LabelerUnavailable(inner)) => {
                ItemError::Client(inner.to_string())
            }
            other => ItemError::Other(other),
        }
    }
}

/// One prompt/generate/parse/grade round for a single item with a fixed
/// context block. Unparseable replies grade as incorrect.
pub fn answer_item(
    generator: &dyn GenerateClient,
    item: &McqaItem,
    block: &ContextBlock,
    symbols: &SymbolSet,
) -> Result<bool, QaError> {
    let prompt = build_prompt(item, block, symbols)?;
    let raw = generator
        .generate(&prompt, MAX_ANSWER_TOKENS)
        .map_err(|e| QaError::ModelUnavailable { message: e.to_string(), partial: Vec::new() })?;
    Ok(parse_answer(&raw, symbols, item.options.len()).is_ok_and(|i| i == item.answer_index))
}

fn context_for_item(
    item: &McqaItem,
    deps: &EvalDeps<'_>,
    config: &EvalConfig,
) -> Result<ContextBlock, QaError> {
    match config.context_source {
        ContextSource::None => Ok(ContextBlock::empty()),
        ContextSource::Retrieved | ContextSource::RetrievedCrr => {
            let embedder = deps.embedder.ok_or(QaError::MissingDependency("an embedder"))?;
            let index = deps.index.ok_or(QaError::MissingDependency("a vector index"))?;
            let store = deps.store.ok_or(QaError::MissingDependency("a chunk store"))?;
            let vectors = embedder
                .embed(std::slice::from_ref(&item.question))
                .map_err(crate::embedx::EmbedxError::EmbedFailed)?;
            let query = EmbeddingVector::new(vectors.into_iter().next().unwrap_or_default());
            let hits = index.search(&query, config.retrieval_k)?;
            if hits.is_empty() {
                return Ok(ContextBlock::empty());
            }
            let selection = match config.context_source {
                ContextSource::RetrievedCrr => {
                    let scorer = deps.scorer.ok_or(QaError::MissingDependency("a scorer"))?;
                    let scored = score_hits(scorer, &item.question, &hits, store)?;
                    filter_and_order(&scored)?
                }
                _ => ContextSelection {
                    chunk_ids: hits.iter().map(|h| h.chunk_id.clone()).collect(),
                    used_fallback: false,
                },
            };
            Ok(assemble_context(&selection, store, config.budget_tokens)?)
        }
    }
}

fn eval_item(
    item: &McqaItem,
    deps: &EvalDeps<'_>,
    config: &EvalConfig,
    symbols: &SymbolSet,
) -> Result<ItemTrace, ItemError> {
    let block = context_for_item(item, deps, config)?;
    let prompt = build_prompt(item, &block, symbols).map_err(ItemError::Other)?;
    let raw = deps
        .generator
        .generate(&prompt, MAX_ANSWER_TOKENS)
        .map_err(|e| ItemError::Client(e.to_string()))?;
    let parsed = parse_answer(&raw, symbols, item.options.len());
    let (parsed_index, parse_error, correct) = match parsed {
        Ok(i) => (Some(i), None, i == item.answer_index),
        Err(e) => (None, Some(e.to_string()), false),
    };
    Ok(ItemTrace {
        item_id: item.item_id.clone(),
        context_chunk_ids: block.included_ids,
        prompt,
        raw_output: raw,
        parsed_index,
        parse_error,
        correct,
    })
}

/// Evaluate items against the configured pipeline.
///
/// Items run in parallel; the trace is ordered by item id regardless of
/// completion order. An unparseable reply counts as incorrect. If a model
/// endpoint dies the run aborts with the completed traces attached.
pub fn evaluate(
    deps: &EvalDeps<'_>,
    items: &[McqaItem],
    config: &EvalConfig,
) -> Result<EvalReport, QaError> {
    if items.is_empty() {
        return Err(QaError::EmptyEvalSet);
    }
    let symbols = SymbolSet::get(config.symbol_set);
    let results: Vec<Result<ItemTrace, ItemError>> =
        items.par_iter().map(|item| eval_item(item, deps, config, symbols)).collect();

    let mut traces = Vec::with_capacity(results.len());
    let mut client_failure: Option<String> = None;
    for result in results {
        match result {
            Ok(trace) => traces.push(trace),
            Err(ItemError::Client(message)) => {
                client_failure.get_or_insert(message);
            }
            Err(ItemError::Other(e)) => return Err(e),
        }
    }
    traces.sort_by(|a, b| a.item_id.cmp(&b.item_id));

    if let Some(message) = client_failure {
        return Err(QaError::ModelUnavailable { message, partial: traces });
    }

    let correct = traces.iter().filter(|t| t.correct).count();
    Ok(EvalReport {
        accuracy: correct as f64 / traces.len() as f64,
        n_items: traces.len(),
        config_fingerprint: config.config_fingerprint.clone(),
        seed: config.seed,
        traces,
    })
}
