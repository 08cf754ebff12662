//! Chunk re-ranking: discrete 1-5 relevance scoring, retain/fallback
//! filtering, context assembly under a token budget, and the rank-triplet
//! training dataset.
//!
//! Filtering rule: chunks scored 4 or 5 are retained (best score first,
//! ties by retrieval rank); when nothing scores 4 or 5 the context falls
//! back to the first three chunks in retrieval order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, ScoreClient};
use crate::corpus::{Chunk, ChunkStore};
use crate::embedx::RetrievalHit;
use crate::tokenize;

/// Retained-context threshold: scores >= 4 survive filtering.
pub const RETAIN_THRESHOLD: u8 = 4;
/// Fallback prefix length when nothing scores above the threshold.
pub const FALLBACK_LEN: usize = 3;
/// Retrieval depth ahead of re-ranking.
pub const DEFAULT_RETRIEVAL_K: usize = 7;

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("no scored hits to filter")]
    EmptyInput,
    #[error("unknown chunk id {0:?}")]
    UnknownChunkId(String),
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(#[source] ClientError),
    #[error("labeler unavailable: {0}")]
    LabelerUnavailable(#[source] ClientError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialize: {0}")]
    Json(#[from] serde_json::Error),
}

/// Discrete relevance score in 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceScore(u8);

impl RelevanceScore {
    /// Clamp a raw scorer reply into 1..=5. Live models occasionally emit
    /// stray values; clamping keeps the pipeline moving with a logged
    /// warning rather than aborting.
    pub fn from_raw(raw: i64) -> Self {
        if !(1..=5).contains(&raw) {
            log::warn!("relevance score {raw} out of range, clamping into 1..=5");
        }
        RelevanceScore(raw.clamp(1, 5) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

/// A retrieval hit plus its re-ranker score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub hit: RetrievalHit,
    pub score: RelevanceScore,
}

/// Outcome of the retain/fallback rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSelection {
    pub chunk_ids: Vec<String>,
    pub used_fallback: bool,
}

/// Assembled context text and what went into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub text: String,
    pub included_ids: Vec<String>,
    pub truncated: bool,
}

impl ContextBlock {
    pub fn empty() -> Self {
        ContextBlock { text: String::new(), included_ids: Vec::new(), truncated: false }
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// One CRR training sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTriplet {
    pub chunk_id: String,
    pub question: String,
    pub rank: u8,
}

/// Score one chunk against a question. Out-of-range scorer output is clamped
/// into 1..=5.
pub fn score_chunk(
    scorer: &dyn ScoreClient,
    question: &str,
    chunk: &Chunk,
) -> Result<RelevanceScore, RankerError> {
    debug_assert!(!question.is_empty() && !chunk.body.is_empty());
    let raw = scorer
        .score(question, &chunk.header, &chunk.body)
        .map_err(RankerError::ScorerUnavailable)?;
    Ok(RelevanceScore::from_raw(raw))
}

/// Score every retrieval hit in rank order, resolving chunks from the store.
pub fn score_hits(
    scorer: &dyn ScoreClient,
    question: &str,
    hits: &[RetrievalHit],
    store: &ChunkStore,
) -> Result<Vec<ScoredHit>, RankerError> {
    hits.iter()
        .map(|hit| {
            let chunk = store
                .get(&hit.chunk_id)
                .ok_or_else(|| RankerError::UnknownChunkId(hit.chunk_id.clone()))?;
            Ok(ScoredHit { hit: hit.clone(), score: score_chunk(scorer, question, chunk)? })
        })
        .collect()
}

/// Retain chunks scored 4 or 5 (score descending, ties by retrieval rank);
/// if none qualify, fall back to the first `min(3, n)` hits in retrieval
/// order. Input must be in retrieval-rank order.
pub fn filter_and_order(scored: &[ScoredHit]) -> Result<ContextSelection, RankerError> {
    if scored.is_empty() {
        return Err(RankerError::EmptyInput);
    }
    let mut retained: Vec<&ScoredHit> =
        scored.iter().filter(|s| s.score.value() >= RETAIN_THRESHOLD).collect();
    if retained.is_empty() {
        return Ok(ContextSelection {
            chunk_ids: scored
                .iter()
                .take(FALLBACK_LEN)
                .map(|s| s.hit.chunk_id.clone())
                .collect(),
            used_fallback: true,
        });
    }
    retained.sort_by(|a, b| {
        b.score.value().cmp(&a.score.value()).then(a.hit.rank.cmp(&b.hit.rank))
    });
    Ok(ContextSelection {
        chunk_ids: retained.iter().map(|s| s.hit.chunk_id.clone()).collect(),
        used_fallback: false,
    })
}

/// Render selected chunks (header, blank line, body, chunks separated by
/// blank lines) and enforce the token budget: trailing chunks are dropped
/// until the total fits, and if the first chunk alone exceeds the budget its
/// body is truncated at a token boundary and the block is flagged.
pub fn assemble_context(
    selection: &ContextSelection,
    store: &ChunkStore,
    budget_tokens: usize,
) -> Result<ContextBlock, RankerError> {
    assert!(budget_tokens > 0, "budget must be positive");
    if selection.chunk_ids.is_empty() {
        return Ok(ContextBlock::empty());
    }
    let mut renders = Vec::with_capacity(selection.chunk_ids.len());
    for id in &selection.chunk_ids {
        let chunk = store.get(id).ok_or_else(|| RankerError::UnknownChunkId(id.clone()))?;
        renders.push((id.clone(), chunk.render()));
    }

    // Chunk separators are blank lines, so total tokens = sum of per-render
    // tokens; keep the longest prefix that fits.
    let mut included = Vec::new();
    let mut texts = Vec::new();
    let mut total = 0usize;
    for (id, render) in &renders {
        let cost = tokenize::count_tokens(render);
        if total + cost > budget_tokens {
            break;
        }
        total += cost;
        included.push(id.clone());
        texts.push(render.clone());
    }

    if included.is_empty() {
        // First chunk alone exceeds the budget: cut it at the last token
        // that fits. The header comes first in the render, so the cut lands
        // in the body.
        let (id, render) = &renders[0];
        let tokens = tokenize::tokenize(render);
        let end = tokens[budget_tokens - 1].end;
        return Ok(ContextBlock {
            text: render[..end].to_string(),
            included_ids: vec![id.clone()],
            truncated: true,
        });
    }

    Ok(ContextBlock { text: texts.join("\n\n"), included_ids: included, truncated: false })
}

/// Label every (question, retrieved chunk) pair into a rank triplet, in
/// question order then retrieval order. Labeler output is clamped to 1..=5.
pub fn build_rank_dataset(
    questions: &[(String, Vec<Chunk>)],
    labeler: &dyn ScoreClient,
) -> Result<Vec<RankTriplet>, RankerError> {
    let mut triplets = Vec::new();
    for (question, chunks) in questions {
        for chunk in chunks {
            let raw = labeler
                .score(question, &chunk.header, &chunk.body)
                .map_err(RankerError::LabelerUnavailable)?;
            triplets.push(RankTriplet {
                chunk_id: chunk.chunk_id.clone(),
                question: question.clone(),
                rank: RelevanceScore::from_raw(raw).value(),
            });
        }
    }
    Ok(triplets)
}

/// Write rank triplets as JSON lines.
pub fn write_rank_dataset<W: Write>(mut w: W, triplets: &[RankTriplet]) -> Result<(), RankerError> {
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Fine-tuning target a recipe belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecipeTarget {
    Crr,
    Sft,
}

impl std::str::FromStr for RecipeTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crr" => Ok(RecipeTarget::Crr),
            "sft" => Ok(RecipeTarget::Sft),
            other => Err(format!("unknown recipe target {other:?} (expected crr or sft)")),
        }
    }
}

/// Hyperparameters for one fine-tuning run, emitted as a config artifact for
/// an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub target: RecipeTarget,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub scheduler: String,
    pub warmup_steps: u32,
    pub epochs: u32,
}

/// The pinned training recipe for a target.
pub fn emit_training_recipe(target: RecipeTarget) -> TrainingRecipe {
    match target {
        RecipeTarget::Crr => TrainingRecipe {
            target,
            batch_size: 64,
            learning_rate: 5e-6,
            scheduler: "constant".into(),
            warmup_steps: 70,
            epochs: 100,
        },
        RecipeTarget::Sft => TrainingRecipe {
            target,
            batch_size: 16,
            learning_rate: 1e-5,
            scheduler: "polynomial".into(),
            warmup_steps: 10,
            epochs: 3,
        },
    }
}

/// Write a recipe as pretty JSON.
pub fn write_training_recipe(target: RecipeTarget, path: &Path) -> Result<TrainingRecipe, RankerError> {
    let recipe = emit_training_recipe(target);
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &recipe)?;
    file.write_all(b"\n")?;
    Ok(recipe)
}
