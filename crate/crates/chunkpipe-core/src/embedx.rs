//! Embedding vectors, the cosine-similarity index, and top-k retrieval.
//!
//! The index is an exact brute-force scan: at the corpus scales this pipeline
//! targets (order 10^5 chunks) a full scan is fast enough, and exactness
//! makes retrieval oracle-testable and reproducible. Chunks are embedded as
//! their header-enriched rendering (header, blank line, body).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, EmbedClient};
use crate::corpus::Chunk;
use crate::tokenize::lowercase_tokens;

#[derive(Debug, Error)]
pub enum EmbedxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate chunk id {0:?}")]
    DuplicateChunkId(String),
    #[error("{chunks} chunks but {vectors} vectors")]
    LengthMismatch { chunks: usize, vectors: usize },
    #[error("non-finite embedding value for chunk {0:?}")]
    NonFinite(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding request failed: {0}")]
    EmbedFailed(#[from] ClientError),
}

/// A dense embedding with explicit dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub dim: usize,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        let dim = values.len();
        EmbeddingVector { values, dim }
    }
}

/// One retrieved chunk: cosine score and contiguous rank from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f32,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMetadata {
    pub embedder_id: String,
    /// Fingerprint of the chunk corpus the index was built from.
    pub fingerprint: String,
}

/// Immutable brute-force cosine index. Entries share one dimension and keep
/// build order; chunk ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(String, Vec<f32>)>,
    metadata: IndexMetadata,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic hashing embedder used in place of a real embedding model.
///
/// Each lowercased token contributes `sign(h) * 1.0` at index `h mod dim`,
/// where `h` is the token's 64-bit FNV-1a hash and the sign is `+1` when the
/// top hash bit is 0. The accumulator is L2-normalized unless it is the zero
/// vector (empty or fully cancelled input), which is returned as-is.
pub fn mock_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 1, "dim must be >= 1");
    let mut values = vec![0.0f32; dim];
    for token in lowercase_tokens(text) {
        let hash = fnv1a64(token.as_bytes());
        let sign = if hash >> 63 == 0 { 1.0f32 } else { -1.0f32 };
        values[(hash % dim as u64) as usize] += sign;
    }
    let norm = values.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    EmbeddingVector::new(values)
}

/// Embed chunks (header-enriched rendering) through an [`EmbedClient`].
/// Output order matches chunk order.
pub fn embed_chunks(
    client: &dyn EmbedClient,
    chunks: &[Chunk],
) -> Result<Vec<EmbeddingVector>, EmbedxError> {
    let texts: Vec<String> = chunks.iter().map(Chunk::render).collect();
    let vectors = client.embed(&texts)?;
    if vectors.len() != chunks.len() {
        return Err(EmbedxError::LengthMismatch { chunks: chunks.len(), vectors: vectors.len() });
    }
    Ok(vectors.into_iter().map(EmbeddingVector::new).collect())
}

/// Pair chunks with their vectors into an index, preserving chunk order.
pub fn build_index(
    chunks: &[Chunk],
    vectors: &[EmbeddingVector],
    metadata: IndexMetadata,
) -> Result<VectorIndex, EmbedxError> {
    if chunks.len() != vectors.len() {
        return Err(EmbedxError::LengthMismatch { chunks: chunks.len(), vectors: vectors.len() });
    }
    let dim = vectors.first().map_or(0, |v| v.dim);
    let mut seen = std::collections::HashSet::with_capacity(chunks.len());
    let mut entries = Vec::with_capacity(chunks.len());
    for (chunk, vector) in chunks.iter().zip(vectors) {
        if vector.dim != dim || vector.values.len() != vector.dim {
            return Err(EmbedxError::DimMismatch { expected: dim, got: vector.values.len() });
        }
        if vector.values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedxError::NonFinite(chunk.chunk_id.clone()));
        }
        if !seen.insert(chunk.chunk_id.as_str()) {
            return Err(EmbedxError::DuplicateChunkId(chunk.chunk_id.clone()));
        }
        entries.push((chunk.chunk_id.clone(), vector.values.clone()));
    }
    Ok(VectorIndex { dim, entries, metadata })
}

/// Cosine similarity with zero-norm inputs scoring 0. Accumulates in f64 so
/// the result is independent of platform FMA behavior.
fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += f64::from(x) * f64::from(y);
        na += f64::from(x) * f64::from(x);
        nb += f64::from(y) * f64::from(y);
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())) as f32
}

impl VectorIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Vec<f32>)] {
        &self.entries
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    /// The `min(k, len)` entries most cosine-similar to `query`, ties broken
    /// by ascending chunk id, ranks contiguous from 0.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, EmbedxError> {
        assert!(k >= 1, "k must be >= 1");
        if query.dim != self.dim {
            return Err(EmbedxError::DimMismatch { expected: self.dim, got: query.dim });
        }
        let mut scored: Vec<(f32, &str)> = self
            .entries
            .iter()
            .map(|(id, values)| (cosine(&query.values, values), id.as_str()))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, (score, id))| RetrievalHit { chunk_id: id.to_string(), score, rank })
            .collect())
    }
}

/// Search as a free function, mirroring the index method.
pub fn search(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<RetrievalHit>, EmbedxError> {
    index.search(query, k)
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    dim: usize,
    count: usize,
    embedder_id: String,
    fingerprint: String,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    chunk_id: String,
    values: Vec<f32>,
}

fn entry_bytes(entries: &[(String, Vec<f32>)]) -> Result<Vec<u8>, EmbedxError> {
    let mut buf = Vec::new();
    for (chunk_id, values) in entries {
        let entry = IndexEntry { chunk_id: chunk_id.clone(), values: values.clone() };
        serde_json::to_writer(&mut buf, &entry)
            .map_err(|e| EmbedxError::CorruptIndex(e.to_string()))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Write the index: one header JSON line with a CRC32 checksum of the entry
/// bytes, then one JSON line per entry.
pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), EmbedxError> {
    let body = entry_bytes(&index.entries)?;
    let header = IndexHeader {
        dim: index.dim,
        count: index.entries.len(),
        embedder_id: index.metadata.embedder_id.clone(),
        fingerprint: index.metadata.fingerprint.clone(),
        checksum: format!("{:08x}", crc32fast::hash(&body)),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &header).map_err(|e| EmbedxError::CorruptIndex(e.to_string()))?;
    file.write_all(b"\n")?;
    file.write_all(&body)?;
    file.flush()?;
    Ok(())
}

/// Read an index back, verifying checksum, count and dimensions.
pub fn load_index(path: &Path) -> Result<VectorIndex, EmbedxError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: IndexHeader = serde_json::from_str(header_line.trim_end())
        .map_err(|e| EmbedxError::CorruptIndex(format!("bad header: {e}")))?;

    let mut body = Vec::new();
    std::io::Read::read_to_end(&mut reader, &mut body)?;
    let checksum = format!("{:08x}", crc32fast::hash(&body));
    if checksum != header.checksum {
        return Err(EmbedxError::CorruptIndex(format!(
            "checksum mismatch: header {} vs payload {}",
            header.checksum, checksum
        )));
    }

    let mut entries = Vec::with_capacity(header.count);
    for line in body.split(|&b| b == b'\n') {
        if line.is_empty() {
            continue;
        }
        let entry: IndexEntry = serde_json::from_slice(line)
            .map_err(|e| EmbedxError::CorruptIndex(format!("bad entry: {e}")))?;
        if entry.values.len() != header.dim {
            return Err(EmbedxError::CorruptIndex(format!(
                "entry {} has dim {}, header says {}",
                entry.chunk_id,
                entry.values.len(),
                header.dim
            )));
        }
        entries.push((entry.chunk_id, entry.values));
    }
    if entries.len() != header.count {
        return Err(EmbedxError::CorruptIndex(format!(
            "entry count {} does not match header count {}",
            entries.len(),
            header.count
        )));
    }
    Ok(VectorIndex {
        dim: header.dim,
        entries,
        metadata: IndexMetadata { embedder_id: header.embedder_id, fingerprint: header.fingerprint },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: &str) -> Chunk {
        Chunk {
            chunk_id: id.to_string(),
            doc_id: "d".into(),
            heading_chain: vec!["d".into(), "A".into()],
            header: "d > A".into(),
            body: format!("body of {id}"),
            token_count: 3,
            parent_id: None,
            seq: 0,
        }
    }

    fn vecs(vals: &[&[f32]]) -> Vec<EmbeddingVector> {
        vals.iter().map(|v| EmbeddingVector::new(v.to_vec())).collect()
    }

    fn meta() -> IndexMetadata {
        IndexMetadata { embedder_id: "test".into(), fingerprint: "0".into() }
    }

    // Independent FNV-1a: fold-based, checked against published test vectors.
    fn fnv1a64_oracle(bytes: &[u8]) -> u64 {
        bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| {
            (h ^ u64::from(b)).wrapping_mul(1099511628211)
        })
    }

    #[test]
    fn fnv1a_matches_published_vectors() {
        // Standard FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
        for s in [&b""[..], b"a", b"foobar", b"alpha", b"beta"] {
            assert_eq!(fnv1a64(s), fnv1a64_oracle(s));
        }
    }

    #[test]
    fn mock_embed_deterministic_self_similarity() {
        let a = mock_embed("The UE attaches to the network", 32);
        let b = mock_embed("The UE attaches to the network", 32);
        assert_eq!(a, b);
        assert!((cosine(&a.values, &b.values) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mock_embed_empty_is_zero_vector() {
        let v = mock_embed("", 16);
        assert_eq!(v.dim, 16);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mock_embed_alpha_beta_matches_fnv_oracle() {
        // Hand-derived: fnv1a64("alpha") = 0x8ac625bb85ed202b -> index 3,
        // top bit set so sign -1; fnv1a64("beta") = 0x7627619b954620a7 ->
        // index 7, sign +1. Normalized: +-1/sqrt(2).
        assert_eq!(fnv1a64_oracle(b"alpha"), 0x8ac625bb85ed202b);
        assert_eq!(fnv1a64_oracle(b"beta"), 0x7627619b954620a7);
        let v = mock_embed("alpha beta", 8);
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let expect = [0.0, 0.0, 0.0, -h, 0.0, 0.0, 0.0, h];
        assert_eq!(v.values, expect);

        // Cross-check the whole construction against an independent path.
        let dim = 8u64;
        let mut acc = vec![0.0f64; 8];
        for tok in ["alpha", "beta"] {
            let h = fnv1a64_oracle(tok.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[(h % dim) as usize] += sign;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let oracle: Vec<f32> = acc.iter().map(|x| (x / norm) as f32).collect();
        assert_eq!(v.values, oracle);
    }

    #[test]
    fn build_index_basic_and_errors() {
        let chunks = [chunk("c1"), chunk("c2"), chunk("c3")];
        let idx = build_index(
            &chunks,
            &vecs(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]]),
            meta(),
        )
        .unwrap();
        assert_eq!((idx.len(), idx.dim()), (3, 4));

        let bad = build_index(
            &chunks,
            &vecs(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0; 5]]),
            meta(),
        );
        assert!(matches!(bad, Err(EmbedxError::DimMismatch { expected: 4, got: 5 })));

        let dup = build_index(
            &[chunk("c1"), chunk("c1")],
            &vecs(&[&[1.0, 0.0], &[0.0, 1.0]]),
            meta(),
        );
        assert!(matches!(dup, Err(EmbedxError::DuplicateChunkId(_))));
    }

    #[test]
    fn search_self_match() {
        let idx = build_index(&[chunk("c1")], &vecs(&[&[1.0, 0.0]]), meta()).unwrap();
        let hits = idx.search(&EmbeddingVector::new(vec![1.0, 0.0]), 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk_id, "c1");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(hits[0].rank, 0);
    }

    #[test]
    fn search_symmetric_tie_breaks_by_chunk_id() {
        let idx = build_index(
            &[chunk("c2"), chunk("c1")],
            &vecs(&[&[0.0, 1.0], &[1.0, 0.0]]),
            meta(),
        )
        .unwrap();
        let q = EmbeddingVector::new(vec![0.70710678, 0.70710678]);
        let hits = idx.search(&q, 2).unwrap();
        assert_eq!(hits[0].chunk_id, "c1");
        assert_eq!(hits[1].chunk_id, "c2");
        assert!((hits[0].score - 0.70710678).abs() < 1e-6);
        assert_eq!(hits[0].score, hits[1].score);
        assert_eq!((hits[0].rank, hits[1].rank), (0, 1));
    }

    #[test]
    fn search_zero_norm_query_scores_zero() {
        let idx = build_index(&[chunk("c1")], &vecs(&[&[1.0, 0.0]]), meta()).unwrap();
        let hits = idx.search(&EmbeddingVector::new(vec![0.0, 0.0]), 1).unwrap();
        assert_eq!(hits[0].score, 0.0);
    }

    #[test]
    fn search_matches_exhaustive_oracle_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dim = 16;
        let n = 50;
        let chunks: Vec<Chunk> = (0..n).map(|i| chunk(&format!("c{i:03}"))).collect();
        let vectors: Vec<EmbeddingVector> = (0..n)
            .map(|_| EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let idx = build_index(&chunks, &vectors, meta()).unwrap();
        let query = EmbeddingVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let hits = idx.search(&query, 7).unwrap();

        // Oracle: repeated max extraction over independently computed cosines.
        let mut rest: Vec<(String, f32)> = chunks
            .iter()
            .zip(&vectors)
            .map(|(c, v)| {
                let dot: f64 = query
                    .values
                    .iter()
                    .zip(&v.values)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                let na: f64 =
                    query.values.iter().map(|&a| f64::from(a) * f64::from(a)).sum::<f64>().sqrt();
                let nb: f64 = v.values.iter().map(|&b| f64::from(b) * f64::from(b)).sum::<f64>().sqrt();
                let score =
                    if na == 0.0 || nb == 0.0 { 0.0f32 } else { (dot / (na * nb)) as f32 };
                (c.chunk_id.clone(), score)
            })
            .collect();
        let mut expected = Vec::new();
        for _ in 0..7 {
            let best = rest
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap();
            expected.push(rest.remove(best));
        }
        let got: Vec<(String, f32)> = hits.into_iter().map(|h| (h.chunk_id, h.score)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn index_round_trip_is_identity() {
        let chunks = [chunk("c1"), chunk("c2")];
        let idx = build_index(
            &chunks,
            &vecs(&[&[0.25, -0.5, 0.125], &[0.1, 0.2, 0.3]]),
            IndexMetadata { embedder_id: "mock-fnv1a64-d3".into(), fingerprint: "abc123".into() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn truncated_index_is_corrupt() {
        let chunks = [chunk("c1"), chunk("c2")];
        let idx = build_index(&chunks, &vecs(&[&[1.0, 0.0], &[0.0, 1.0]]), meta()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        save_index(&idx, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_index(&path), Err(EmbedxError::CorruptIndex(_))));
    }

    #[test]
    fn empty_index_round_trips() {
        let idx = build_index(&[], &[], meta()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back, idx);
    }

    #[test]
    fn embed_chunks_renders_header_plus_body() {
        let emb = crate::clients::HashEmbedder::new(8);
        let c = chunk("c1");
        let direct = mock_embed(&c.render(), 8);
        let via = embed_chunks(&emb, std::slice::from_ref(&c)).unwrap();
        assert_eq!(via[0], direct);
    }
}
