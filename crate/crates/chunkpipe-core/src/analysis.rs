//! Diagnostic experiments: golden-chunk identification, golden-position
//! histograms, chunk-size/count accuracy sweeps, and context-noise
//! sensitivity. Reports are plain rows plus CSV renderings (one header row);
//! the CLI mirrors them to JSON.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::GenerateClient;
use crate::corpus::{Chunk, ChunkStore};
use crate::qa::{answer_item, McqaItem, QaError, SymbolSet, SymbolSetId};
use crate::ranker::{assemble_context, ContextSelection, RankerError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("record {item_id:?} has retrieval position {position}, beyond k={k}")]
    PositionExceedsK { item_id: String, position: usize, k: usize },
    #[error("item {item_id:?}: {need} distractors requested, pool has {have}")]
    NotEnoughDistractors { item_id: String, need: usize, have: usize },
    #[error("golden chunk {chunk_id:?} not present in the store")]
    UnknownGoldenChunk { chunk_id: String },
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Ranker(#[from] RankerError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Which baseline decides "the model cannot answer without this chunk".
///
/// `NoContext` asks the bare question; `OtherChunks` uses all remaining
/// candidates as context instead. `NoContext` is the default reading; the
/// alternative stays available behind this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    NoContext,
    OtherChunks,
}

#[derive(Debug, Clone, Copy)]
pub struct GoldenOptions {
    pub symbol_set: SymbolSetId,
    pub budget_tokens: usize,
    pub baseline: BaselineMode,
}

/// Per-item golden chunks and where the first of them sat in retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenRecord {
    pub item_id: String,
    pub golden_chunk_ids: Vec<String>,
    /// 1-based retrieval position of the first golden chunk, when retrieved.
    pub position_in_retrieval: Option<usize>,
}

/// Golden-position counts for positions 1..=k plus an "absent" bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenHistogram {
    pub k: usize,
    pub counts: Vec<u64>,
    pub absent: u64,
}

/// One cell of the chunk-size/count accuracy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub chunk_size: usize,
    pub n_chunks: usize,
    pub accuracy: f64,
}

/// Accuracy with `n_random` distractors mixed into the golden context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub n_random: usize,
    pub accuracy: f64,
}

/// An item whose golden chunk is known, for the noise experiment.
/// Distractors are drawn outside `excluded_chunk_ids` (the retrieved set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseInput {
    pub item: McqaItem,
    pub golden_chunk_id: String,
    pub excluded_chunk_ids: Vec<String>,
}

fn single_chunk_block(
    chunk: &Chunk,
    store: &ChunkStore,
    budget: usize,
) -> Result<crate::ranker::ContextBlock, AnalysisError> {
    let selection = ContextSelection {
        chunk_ids: vec![chunk.chunk_id.clone()],
        used_fallback: false,
    };
    Ok(assemble_context(&selection, store, budget)?)
}

/// Identify candidates that alone let the model answer correctly while the
/// baseline fails.
///
/// Makes exactly `|candidates| + 1` generate calls per item in `NoContext`
/// mode (the baseline is evaluated once, every candidate once,
/// unconditionally) and `2 * |candidates|` in `OtherChunks` mode.
pub fn find_golden(
    generator: &dyn GenerateClient,
    item: &McqaItem,
    candidates: &[Chunk],
    opts: &GoldenOptions,
) -> Result<Vec<String>, AnalysisError> {
    assert!(!candidates.is_empty(), "candidates must be non-empty");
    let symbols = SymbolSet::get(opts.symbol_set);
    let store = ChunkStore::new(candidates.to_vec())?;

    let baseline_no_context = match opts.baseline {
        BaselineMode::NoContext => Some(answer_item(
            generator,
            item,
            &crate::ranker::ContextBlock::empty(),
            symbols,
        )?),
        BaselineMode::OtherChunks => None,
    };

    let mut golden = Vec::new();
    for chunk in candidates {
        let with_chunk =
            answer_item(generator, item, &single_chunk_block(chunk, &store, opts.budget_tokens)?, symbols)?;
        let baseline = match opts.baseline {
            BaselineMode::NoContext => baseline_no_context.expect("computed above"),
            BaselineMode::OtherChunks => {
                let others: Vec<String> = candidates
                    .iter()
                    .filter(|c| c.chunk_id != chunk.chunk_id)
                    .map(|c| c.chunk_id.clone())
                    .collect();
                let block = if others.is_empty() {
                    crate::ranker::ContextBlock::empty()
                } else {
                    assemble_context(
                        &ContextSelection { chunk_ids: others, used_fallback: false },
                        &store,
                        opts.budget_tokens,
                    )?
                };
                answer_item(generator, item, &block, symbols)?
            }
        };
        if with_chunk && !baseline {
            golden.push(chunk.chunk_id.clone());
        }
    }
    Ok(golden)
}

/// Run [`find_golden`] over a retrieval list and record where the first
/// golden chunk was retrieved.
pub fn golden_record(
    generator: &dyn GenerateClient,
    item: &McqaItem,
    retrieved: &[Chunk],
    opts: &GoldenOptions,
) -> Result<GoldenRecord, AnalysisError> {
    let golden = find_golden(generator, item, retrieved, opts)?;
    let position = retrieved
        .iter()
        .position(|c| golden.contains(&c.chunk_id))
        .map(|i| i + 1);
    Ok(GoldenRecord {
        item_id: item.item_id.clone(),
        golden_chunk_ids: golden,
        position_in_retrieval: position,
    })
}

/// Count golden positions 1..=k; records with no retrieved golden chunk land
/// in the `absent` bin.
pub fn golden_histogram(
    records: &[GoldenRecord],
    k: usize,
) -> Result<GoldenHistogram, AnalysisError> {
    let mut histogram = GoldenHistogram { k, counts: vec![0; k], absent: 0 };
    for record in records {
        match record.position_in_retrieval {
            Some(position) if position >= 1 && position <= k => {
                histogram.counts[position - 1] += 1;
            }
            Some(position) => {
                return Err(AnalysisError::PositionExceedsK {
                    item_id: record.item_id.clone(),
                    position,
                    k,
                })
            }
            None => histogram.absent += 1,
        }
    }
    Ok(histogram)
}

/// Evaluate every (chunk size, chunk count) cell in deterministic grid order
/// (sizes outer, counts inner). `eval_fn` re-chunks per size and runs the
/// evaluation pipeline for the cell.
pub fn sweep_chunk_config(
    sizes: &[usize],
    counts: &[usize],
    mut eval_fn: impl FnMut(usize, usize) -> Result<f64, AnalysisError>,
) -> Result<Vec<SweepRow>, AnalysisError> {
    let mut rows = Vec::with_capacity(sizes.len() * counts.len());
    for &chunk_size in sizes {
        for &n_chunks in counts {
            rows.push(SweepRow { chunk_size, n_chunks, accuracy: eval_fn(chunk_size, n_chunks)? });
        }
    }
    Ok(rows)
}

/// Measure accuracy as seeded random distractors join the golden chunk.
///
/// For each `n` in `n_random` and each item, the context is the golden chunk
/// plus `n` distinct distractors drawn from the store (outside the item's
/// excluded set), with the golden chunk at a seeded-random position. `n = 0`
/// is the clean baseline.
pub fn noise_experiment(
    generator: &dyn GenerateClient,
    inputs: &[NoiseInput],
    store: &ChunkStore,
    n_random: &[usize],
    seed: u64,
    opts: &GoldenOptions,
) -> Result<Vec<NoiseRow>, AnalysisError> {
    assert!(!inputs.is_empty(), "noise experiment needs at least one item");
    let symbols = SymbolSet::get(opts.symbol_set);
    let mut rows = Vec::with_capacity(n_random.len());
    for (n_idx, &n) in n_random.iter().enumerate() {
        let mut correct = 0usize;
        for (item_idx, input) in inputs.iter().enumerate() {
            let golden = store.get(&input.golden_chunk_id).ok_or_else(|| {
                AnalysisError::UnknownGoldenChunk { chunk_id: input.golden_chunk_id.clone() }
            })?;
            let pool: Vec<&Chunk> = store
                .chunks()
                .iter()
                .filter(|c| {
                    c.chunk_id != input.golden_chunk_id
                        && !input.excluded_chunk_ids.contains(&c.chunk_id)
                })
                .collect();
            if pool.len() < n {
                return Err(AnalysisError::NotEnoughDistractors {
                    item_id: input.item.item_id.clone(),
                    need: n,
                    have: pool.len(),
                });
            }

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n_idx as u64) << 32) | item_idx as u64);
            let picked = rand::seq::index::sample(&mut rng, pool.len(), n);
            let mut ids: Vec<String> =
                picked.iter().map(|i| pool[i].chunk_id.clone()).collect();
            let golden_slot = rng.gen_range(0..=ids.len());
            ids.insert(golden_slot, golden.chunk_id.clone());

            let block = assemble_context(
                &ContextSelection { chunk_ids: ids, used_fallback: false },
                store,
                opts.budget_tokens,
            )?;
            if answer_item(generator, &input.item, &block, symbols)? {
                correct += 1;
            }
        }
        rows.push(NoiseRow { n_random: n, accuracy: correct as f64 / inputs.len() as f64 });
    }
    Ok(rows)
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// `item_id,golden_ids,position` with golden ids ';'-joined and an empty
/// position for absent.
pub fn golden_csv(records: &[GoldenRecord]) -> String {
    let mut out = String::from("item_id,golden_ids,position\n");
    for r in records {
        let ids = r.golden_chunk_ids.join(";");
        let position = r.position_in_retrieval.map_or(String::new(), |p| p.to_string());
        out.push_str(&format!("{},{},{position}\n", csv_field(&r.item_id), csv_field(&ids)));
    }
    out
}

/// `position,count` for 1..=k then the absent bin.
pub fn histogram_csv(histogram: &GoldenHistogram) -> String {
    let mut out = String::from("position,count\n");
    for (i, count) in histogram.counts.iter().enumerate() {
        out.push_str(&format!("{},{count}\n", i + 1));
    }
    out.push_str(&format!("absent,{}\n", histogram.absent));
    out
}

/// `chunk_size,n_chunks,accuracy`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("chunk_size,n_chunks,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.chunk_size, r.n_chunks, r.accuracy));
    }
    out
}

/// `n_random,accuracy`.
pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("n_random,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.n_random, r.accuracy));
    }
    out
}
