//! Entity matching and value extraction over (query, candidate) pairs.
//!
//! Two reasoners share one decision type: a remote generative model driven
//! by text prompts, and a deterministic local matcher built on the embedder.

pub mod calibrate;
pub mod local;
pub mod prompt;
pub mod remote;
pub mod response;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;
use crate::model::ConfigError;

pub use calibrate::{calibrate, Calibration, LabeledPair};
pub use local::{LocalReasoner, LocalReasonerParams};
pub use prompt::{build_pair_prompt, build_standalone_prompt, PromptTemplate};
pub use remote::{RemoteError, RemoteModelClient, RemoteReasoner, RetryingClient};
pub use response::postprocess_response;

/// Outcome of asking a reasoner about one pair (or one standalone tuple).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasonerDecision {
    pub matched: bool,
    pub value: Option<String>,
    /// Candidate attribute the value was read from, when known.
    pub source_attribute: Option<String>,
    /// Unparsed model text; absent for the local reasoner.
    pub raw_response: Option<String>,
    /// The model declined to answer.
    pub refusal: bool,
}

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("candidate tuple has no attributes")]
    NoAttributes,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("calibration needs both matching and non-matching pairs")]
    SingleClass,
}
