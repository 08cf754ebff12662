//! Chunk lookup store and JSON-lines serialization.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Chunk, CorpusError};

/// Immutable chunk collection with id lookup, shared across pipeline stages.
#[derive(Debug, Clone)]
pub struct ChunkStore {
    chunks: Vec<Chunk>,
    by_id: HashMap<String, usize>,
}

impl ChunkStore {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (i, chunk) in chunks.iter().enumerate() {
            if by_id.insert(chunk.chunk_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateChunkId(chunk.chunk_id.clone()));
            }
        }
        Ok(ChunkStore { chunks, by_id })
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Write chunks as JSON lines, one object per chunk, UTF-8.
pub fn write_chunks_jsonl<W: Write>(mut w: W, chunks: &[Chunk]) -> Result<(), CorpusError> {
    for chunk in chunks {
        serde_json::to_writer(&mut w, chunk)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read chunks back from JSON lines.
pub fn read_chunks_jsonl(path: &Path) -> Result<Vec<Chunk>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut chunks = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        chunks.push(serde_json::from_str(&line)?);
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_chunks, parse_document, ChunkPolicy};

    #[test]
    fn store_rejects_duplicate_ids() {
        let tree = parse_document("# A\nx", "d").unwrap();
        let chunks = make_chunks(&tree, &ChunkPolicy::default()).unwrap();
        let doubled = [chunks.clone(), chunks].concat();
        assert!(matches!(ChunkStore::new(doubled), Err(CorpusError::DuplicateChunkId(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let tree = parse_document("# A\nsome body text\n## B\nnested body", "d").unwrap();
        let chunks = make_chunks(&tree, &ChunkPolicy::default()).unwrap();
        let mut buf = Vec::new();
        write_chunks_jsonl(&mut buf, &chunks).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = read_chunks_jsonl(&path).unwrap();
        assert_eq!(back, chunks);
    }
}
