//! Live HTTP clients for the generate/embed/score endpoints.
//!
//! All three share the retry policy from [`EndpointConfig`]: a request is
//! attempted `retries + 1` times; transport errors and non-2xx statuses are
//! retried, then surfaced as `Unavailable` (or `Timeout` when the final
//! failure was a timeout).

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ClientError, EmbedClient, EndpointConfig, GenerateClient, ScoreClient};

/// Texts per embedding request.
const EMBED_BATCH: usize = 32;

#[derive(Debug)]
struct Endpoint {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
}

impl Endpoint {
    fn new(config: EndpointConfig) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("constructing http client");
        Endpoint { config, http }
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let url = format!("{}{path}", self.config.base_url.trim_end_matches('/'));
        let attempts = self.config.retries + 1;
        let mut last_timeout = false;
        let mut last_message = String::new();
        for _ in 0..attempts {
            let mut req = self.http.post(&url).json(body);
            if let Some(token) = &self.config.auth_token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Resp>().map_err(|e| ClientError::BadResponse {
                        endpoint: url.clone(),
                        message: e.to_string(),
                    });
                }
                Ok(resp) => {
                    last_timeout = false;
                    last_message = format!("status {}", resp.status());
                }
                Err(e) => {
                    last_timeout = e.is_timeout();
                    last_message = e.to_string();
                }
            }
        }
        if last_timeout {
            Err(ClientError::Timeout { endpoint: url, attempts })
        } else {
            Err(ClientError::Unavailable { endpoint: url, attempts, message: last_message })
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// `POST /generate` client. Temperature is fixed to 0: single-token answer
/// prediction is greedy by construction and evaluation must be deterministic.
#[derive(Debug)]
pub struct HttpGenerateClient {
    endpoint: Endpoint,
}

impl HttpGenerateClient {
    pub fn new(config: EndpointConfig) -> Self {
        HttpGenerateClient { endpoint: Endpoint::new(config) }
    }
}

impl GenerateClient for HttpGenerateClient {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, ClientError> {
        debug_assert!(!prompt.is_empty(), "prompt must be non-empty");
        let req = GenerateRequest { prompt, max_tokens, temperature: 0 };
        let resp: GenerateResponse = self.endpoint.post_json("/generate", &req)?;
        Ok(resp.text)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// `POST /embed` client, batching at 32 texts per request.
#[derive(Debug)]
pub struct HttpEmbedClient {
    endpoint: Endpoint,
}

impl HttpEmbedClient {
    pub fn new(config: EndpointConfig) -> Self {
        HttpEmbedClient { endpoint: Endpoint::new(config) }
    }
}

impl EmbedClient for HttpEmbedClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(EMBED_BATCH) {
            let resp: EmbedResponse = self.endpoint.post_json("/embed", &EmbedRequest { texts: batch })?;
            if resp.vectors.len() != batch.len() {
                return Err(ClientError::BadResponse {
                    endpoint: self.endpoint.config.base_url.clone(),
                    message: format!(
                        "embedding count mismatch: sent {} texts, got {} vectors",
                        batch.len(),
                        resp.vectors.len()
                    ),
                });
            }
            out.extend(resp.vectors);
        }
        Ok(out)
    }

    fn embedder_id(&self) -> String {
        format!("endpoint:{}", self.endpoint.config.base_url)
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    chunk: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    rank: i64,
}

/// `POST /score` client. The chunk field carries the header-enriched
/// rendering (header, blank line, body), matching what gets embedded.
#[derive(Debug)]
pub struct HttpScoreClient {
    endpoint: Endpoint,
}

impl HttpScoreClient {
    pub fn new(config: EndpointConfig) -> Self {
        HttpScoreClient { endpoint: Endpoint::new(config) }
    }
}

impl ScoreClient for HttpScoreClient {
    fn score(&self, question: &str, header: &str, body: &str) -> Result<i64, ClientError> {
        let chunk = format!("{header}\n\n{body}");
        let resp: ScoreResponse =
            self.endpoint.post_json("/score", &ScoreRequest { question, chunk: &chunk })?;
        Ok(resp.rank)
    }
}
