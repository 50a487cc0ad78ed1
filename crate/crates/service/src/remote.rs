//! HTTP clients for the remote model, cross scorer and embedder.
//!
//! All three are blocking and must be built and used off the async runtime
//! (jobs and index builds run on blocking threads).

use std::time::Duration;

use lakeclean::embed::{EmbedError, Embedder, EmbeddingVector};
use lakeclean::reason::{RemoteError, RemoteModelClient, RetryingClient};
use lakeclean::rerank::{CrossPair, CrossScorer, RerankError};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

pub const ENV_MODEL_URL: &str = "LAKECLEAN_MODEL_URL";
pub const ENV_MODEL_CREDENTIAL: &str = "LAKECLEAN_MODEL_CREDENTIAL";
pub const ENV_MODEL_TIMEOUT_MS: &str = "LAKECLEAN_MODEL_TIMEOUT_MS";
pub const ENV_MODEL_RETRIES: &str = "LAKECLEAN_MODEL_RETRIES";
pub const ENV_MODEL_MAX_TOKENS: &str = "LAKECLEAN_MODEL_MAX_TOKENS";
pub const ENV_CROSS_URL: &str = "LAKECLEAN_CROSS_URL";
pub const ENV_EMBEDDER_URL: &str = "LAKECLEAN_EMBEDDER_URL";
pub const ENV_EMBEDDER_DIM: &str = "LAKECLEAN_EMBEDDER_DIM";
/// Variable consulted for the API key when no credential name is set.
pub const DEFAULT_CREDENTIAL_VAR: &str = "LAKECLEAN_API_KEY";

/// Where and how to reach the remote model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSettings {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub max_tokens: u32,
}

impl ModelSettings {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            max_tokens: 64,
        }
    }

    /// Reads the settings from the environment; `None` when no endpoint is
    /// configured.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_MODEL_URL).ok().filter(|u| !u.trim().is_empty())?;
        let mut s = Self::new(url);
        let cred = std::env::var(ENV_MODEL_CREDENTIAL).unwrap_or_else(|_| DEFAULT_CREDENTIAL_VAR.into());
        s.api_key = std::env::var(cred).ok().filter(|k| !k.is_empty());
        if let Some(ms) = env_number(ENV_MODEL_TIMEOUT_MS) {
            s.timeout = Duration::from_millis(ms);
        }
        if let Some(r) = env_number(ENV_MODEL_RETRIES) {
            s.retries = r as u32;
        }
        if let Some(t) = env_number(ENV_MODEL_MAX_TOKENS) {
            s.max_tokens = t as u32;
        }
        Some(s)
    }

    /// A client with retries applied.
    pub fn client(&self) -> RetryingClient<HttpModelClient> {
        RetryingClient::new(HttpModelClient::new(self), self.retries, Duration::from_millis(200))
    }
}

fn env_number(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.trim().parse().ok())
}

fn http(timeout: Duration) -> Client {
    Client::builder().timeout(timeout).build().expect("http client builds")
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// `POST {"prompt", "max_tokens"}` and read `{"text"}`.
pub struct HttpModelClient {
    http: Client,
    url: String,
    api_key: Option<String>,
    max_tokens: u32,
}

impl HttpModelClient {
    pub fn new(s: &ModelSettings) -> Self {
        Self {
            http: http(s.timeout),
            url: s.url.clone(),
            api_key: s.api_key.clone(),
            max_tokens: s.max_tokens,
        }
    }
}

fn transport(e: reqwest::Error) -> RemoteError {
    if e.is_timeout() {
        RemoteError::Timeout
    } else {
        RemoteError::Transport(e.to_string())
    }
}

impl RemoteModelClient for HttpModelClient {
    fn complete(&self, prompt: &str) -> Result<String, RemoteError> {
        let mut req = self.http.post(&self.url).json(&CompletionRequest {
            prompt,
            max_tokens: self.max_tokens,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(transport)?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(RemoteError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            // The service understood and declined; retrying will not help.
            let body = resp.text().unwrap_or_default();
            return Err(RemoteError::Refusal(format!("HTTP {status}: {}", body.trim())));
        }
        let body: CompletionResponse = resp
            .json()
            .map_err(|e| RemoteError::Transport(format!("malformed completion: {e}")))?;
        Ok(body.text)
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// `POST {"pairs": [[q, c], ...]}` and read `{"scores": [...]}`.
pub struct HttpCrossScorer {
    http: Client,
    url: String,
}

impl HttpCrossScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            http: http(timeout),
            url: url.into(),
        }
    }
}

impl CrossScorer for HttpCrossScorer {
    fn score(&self, pairs: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError> {
        let body = ScoreRequest {
            pairs: pairs.iter().map(|p| [p.query_text, p.candidate_text]).collect(),
        };
        let resp = self
            .http
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| RerankError::Scorer(e.to_string()))?;
        let out: ScoreResponse = resp.json().map_err(|e| RerankError::Scorer(format!("malformed scores: {e}")))?;
        Ok(out.scores)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// `POST {"texts": [...]}` and read `{"vectors": [[...]]}`.
///
/// Returned vectors are L2-normalized here so cosine stays a dot product.
pub struct HttpEmbedder {
    http: Client,
    url: String,
    dim: usize,
    name: String,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        let url = url.into();
        Self {
            http: http(timeout),
            name: format!("http:{url}:{dim}"),
            url,
            dim,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        v.pop().ok_or_else(|| EmbedError::Malformed("no vector returned".into()))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp = self
            .http
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let out: EmbedResponse = resp.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if out.vectors.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "{} vectors for {} texts",
                out.vectors.len(),
                texts.len()
            )));
        }
        out.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::Dimension {
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                Ok(EmbeddingVector::normalized(v))
            })
            .collect()
    }
}

/// Optional remote collaborators a service instance was started with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemoteSettings {
    pub model: Option<ModelSettings>,
    pub cross_url: Option<String>,
    /// Endpoint and dimension of a remote embedder.
    pub embedder: Option<(String, usize)>,
}

impl RemoteSettings {
    pub fn from_env() -> Self {
        let embedder = std::env::var(ENV_EMBEDDER_URL)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .map(|u| (u, env_number(ENV_EMBEDDER_DIM).unwrap_or(lakeclean::embed::DEFAULT_DIM as u64) as usize));
        Self {
            model: ModelSettings::from_env(),
            cross_url: std::env::var(ENV_CROSS_URL).ok().filter(|u| !u.trim().is_empty()),
            embedder,
        }
    }

    pub fn cross_scorer(&self) -> Option<HttpCrossScorer> {
        self.cross_url.as_ref().map(|u| HttpCrossScorer::new(u.clone(), Duration::from_secs(60)))
    }

    /// The configured remote embedder, or the built-in hashed embedder.
    pub fn embedder(&self) -> Box<dyn Embedder> {
        match &self.embedder {
            Some((url, dim)) => Box::new(HttpEmbedder::new(url.clone(), *dim, Duration::from_secs(60))),
            None => Box::new(lakeclean::embed::HashEmbedder::default()),
        }
    }
}
