//! Deterministic in-process stand-ins for the three model roles.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{ClientError, EmbedClient, GenerateClient, ScoreClient};
use crate::tokenize::lowercase_tokens;

/// Generator scripted by substring rules: the first rule whose pattern occurs
/// in the prompt wins, otherwise `default_reply`.
#[derive(Debug)]
pub struct ScriptedGenerator {
    rules: Vec<(String, String)>,
    default_reply: String,
    calls: AtomicU64,
}

impl ScriptedGenerator {
    pub fn new(rules: Vec<(String, String)>, default_reply: impl Into<String>) -> Self {
        ScriptedGenerator { rules, default_reply: default_reply.into(), calls: AtomicU64::new(0) }
    }

    /// Generator that replies the same thing to everything.
    pub fn constant(reply: impl Into<String>) -> Self {
        ScriptedGenerator::new(Vec::new(), reply)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GenerateClient for ScriptedGenerator {
    fn generate(&self, prompt: &str, _max_tokens: usize) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        for (pattern, reply) in &self.rules {
            if prompt.contains(pattern) {
                return Ok(reply.clone());
            }
        }
        Ok(self.default_reply.clone())
    }
}

/// Hashing embedder: each lowercased token adds ±1 at an FNV-1a-derived
/// index, then the vector is L2-normalized. See [`crate::embedx::mock_embed`].
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    calls: AtomicU64,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dim must be >= 1");
        HashEmbedder { dim, calls: AtomicU64::new(0) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl EmbedClient for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| crate::embedx::mock_embed(t, self.dim).values).collect())
    }

    fn embedder_id(&self) -> String {
        format!("mock-fnv1a64-d{}", self.dim)
    }
}

/// Rubric scorer: Jaccard overlap of the question and chunk-body token sets,
/// mapped onto the discrete 1-5 scale.
#[derive(Debug, Default)]
pub struct JaccardScorer {
    calls: AtomicU64,
}

impl JaccardScorer {
    pub fn new() -> Self {
        JaccardScorer::default()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Jaccard overlap of lowercased token sets; 1.0 when both are empty.
    pub fn jaccard(a: &str, b: &str) -> f64 {
        let sa: BTreeSet<String> = lowercase_tokens(a).into_iter().collect();
        let sb: BTreeSet<String> = lowercase_tokens(b).into_iter().collect();
        let union = sa.union(&sb).count();
        if union == 0 {
            return 1.0;
        }
        sa.intersection(&sb).count() as f64 / union as f64
    }

    pub fn rubric(j: f64) -> i64 {
        match j {
            j if j >= 0.5 => 5,
            j if j >= 0.3 => 4,
            j if j >= 0.2 => 3,
            j if j >= 0.1 => 2,
            _ => 1,
        }
    }
}

impl ScoreClient for JaccardScorer {
    fn score(&self, question: &str, _header: &str, body: &str) -> Result<i64, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Self::rubric(Self::jaccard(question, body)))
    }
}
