//! The single external-model boundary.
//!
//! Every pipeline stage that needs a model (generation, embedding, relevance
//! scoring) talks to one of the three traits here. Live implementations call
//! HTTP endpoints; mock implementations are deterministic, in-process and
//! carry atomic call counters so tests can assert exactly which stages hit
//! the model. All clients are shareable across concurrent pipeline workers.

mod http;
mod mock;

pub use http::{HttpEmbedClient, HttpGenerateClient, HttpScoreClient};
pub use mock::{HashEmbedder, JaccardScorer, ScriptedGenerator};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Env var overriding the generation endpoint URL.
pub const ENV_GEN_URL: &str = "CHUNKPIPE_GEN_URL";
/// Env var overriding the embedding endpoint URL.
pub const ENV_EMBED_URL: &str = "CHUNKPIPE_EMBED_URL";
/// Env var overriding the relevance-scoring endpoint URL.
pub const ENV_SCORE_URL: &str = "CHUNKPIPE_SCORE_URL";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint {endpoint} unavailable after {attempts} attempt(s): {message}")]
    Unavailable { endpoint: String, attempts: u32, message: String },
    #[error("endpoint {endpoint} timed out after {attempts} attempt(s)")]
    Timeout { endpoint: String, attempts: u32 },
    #[error("bad response from {endpoint}: {message}")]
    BadResponse { endpoint: String, message: String },
}

/// Connection settings for a live endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            auth_token: None,
        }
    }
}

/// Text generation at temperature 0.
pub trait GenerateClient: Send + Sync {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, ClientError>;
}

/// Batch text embedding. Result order always matches input order.
pub trait EmbedClient: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError>;
    /// Stable identifier recorded in index metadata.
    fn embedder_id(&self) -> String;
}

/// Discrete 1-5 relevance scoring of a chunk against a question. Header and
/// body are passed separately: the live endpoint scores the full
/// header-enriched rendering, the mock rubric works on the body.
/// Out-of-range replies are the caller's problem (the ranker clamps).
pub trait ScoreClient: Send + Sync {
    fn score(&self, question: &str, header: &str, body: &str) -> Result<i64, ClientError>;
}
