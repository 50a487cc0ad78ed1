//! Remote generative model: transport abstraction, retries and decisions.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;

use super::prompt::{build_pair_prompt, build_standalone_prompt, PromptTemplate};
use super::response::postprocess_response;
use super::{ReasonError, ReasonerDecision};
use crate::model::{Columns, Tuple};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RemoteError {
    #[error("remote model timed out")]
    Timeout,
    #[error("remote model transport error: {0}")]
    Transport(String),
    /// The model answered but declined; not retried.
    #[error("remote model refused: {0}")]
    Refusal(String),
}

impl RemoteError {
    pub fn is_transient(&self) -> bool {
        matches!(self, RemoteError::Timeout | RemoteError::Transport(_))
    }
}

/// Sends one prompt and returns the completion text.
pub trait RemoteModelClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, RemoteError>;
}

/// Retries transient failures with linear backoff.
pub struct RetryingClient<C> {
    inner: C,
    retries: u32,
    backoff: Duration,
}

impl<C: RemoteModelClient> RetryingClient<C> {
    pub fn new(inner: C, retries: u32, backoff: Duration) -> Self {
        Self { inner, retries, backoff }
    }
}

impl<C: RemoteModelClient> RemoteModelClient for RetryingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, RemoteError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(prompt) {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    attempt += 1;
                    std::thread::sleep(self.backoff * attempt);
                }
                other => return other,
            }
        }
    }
}

/// Prompt-driven reasoner. Counts every prompt it sends.
pub struct RemoteReasoner<'a> {
    client: &'a dyn RemoteModelClient,
    template: PromptTemplate,
    calls: AtomicU64,
}

impl<'a> RemoteReasoner<'a> {
    pub fn new(client: &'a dyn RemoteModelClient, template: PromptTemplate) -> Self {
        Self {
            client,
            template,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn send(&self, prompt: &str, dirty: &str) -> Result<ReasonerDecision, RemoteError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match self.client.complete(prompt) {
            Ok(raw) => Ok(postprocess_response(&raw, dirty)),
            Err(RemoteError::Refusal(raw)) => Ok(ReasonerDecision {
                raw_response: Some(raw),
                refusal: true,
                ..ReasonerDecision::default()
            }),
            Err(e) => Err(e),
        }
    }

    /// Asks for the dirty value from the tuple alone.
    pub fn decide_standalone(&self, t: &Tuple, dirty: &str, pivots: &[String]) -> Result<ReasonerDecision, ReasonError> {
        let prompt = build_standalone_prompt(t, dirty, &Columns::List(pivots.to_vec()), &self.template)?;
        let mut d = self.send(&prompt, dirty)?;
        // No candidate exists, so an answer counts as matched whenever a value came back.
        d.matched = d.value.is_some();
        Ok(d)
    }

    /// Asks whether `candidate` is the query's entity and, if so, for the value.
    /// A value is attributed to the first candidate column holding it verbatim.
    pub fn decide_pair(&self, query: &Tuple, candidate: &Tuple, dirty: &str, pivots: &[String]) -> Result<ReasonerDecision, ReasonError> {
        let prompt = build_pair_prompt(query, candidate, dirty, &Columns::List(pivots.to_vec()), &self.template)?;
        let mut d = self.send(&prompt, dirty)?;
        if !d.matched {
            d.value = None;
        }
        if let Some(v) = &d.value {
            d.source_attribute = candidate
                .attrs()
                .iter()
                .find(|(_, cell)| cell.as_deref() == Some(v.as_str()))
                .map(|(name, _)| name.clone());
        }
        Ok(d)
    }
}
