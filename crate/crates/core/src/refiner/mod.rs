//! Prompt construction, model querying and response extraction.

mod conversation;
pub mod postprocess;
pub mod prompt;
pub mod provider;
pub mod transcript;

use std::ops::{Add, AddAssign};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::conversation::{Conversation, Message, Role};
pub use self::postprocess::{postprocess, wrap};
pub use self::prompt::{build_prompt, make_feedback_message};
pub use self::provider::{
    Completion, FnProvider, HttpProvider, MockProvider, MockRule, ModelConfig, ModelProvider, ProviderError,
    ProviderKind, ReplayProvider,
};
pub use self::transcript::{QueryRecord, Transcript};

#[derive(Debug, Error)]
pub enum RefinerError {
    #[error("template error: {0}")]
    Template(String),
    #[error("unresolved placeholder `{{{0}}}` in prompt")]
    UnresolvedPlaceholder(String),
    #[error("validation result has nothing to repair")]
    NothingToRepair,
    #[error("extraction failed: {0}")]
    Extraction(&'static str),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model pool is empty")]
    EmptyPool,
    #[error("duplicate model `{0}` in pool")]
    DuplicateModel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    /// Extend the node's conversation with validator feedback.
    WithFeedback,
    /// Send the base prompt on a fresh conversation.
    NoFeedback,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefinementAction {
    pub kind: ActionKind,
    pub model_id: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub queries: u64,
    pub tokens: u64,
}

impl Add for UsageRecord {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            queries: self.queries + o.queries,
            tokens: self.tokens + o.tokens,
        }
    }
}

impl AddAssign for UsageRecord {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_ms: 500,
        }
    }
}

/// One model query as issued by the search.
#[derive(Clone, Debug)]
pub struct GenerateRequest<'a> {
    pub function: &'a str,
    pub node: usize,
    pub model_id: &'a str,
    pub conversation: &'a Conversation,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Final outcome after retries.
    pub outcome: Result<String, ProviderError>,
    /// Usage over every attempt, failed ones included.
    pub usage: UsageRecord,
}

/// Ordered set of models, each backed by a provider.
#[derive(Clone)]
pub struct ModelPool {
    models: Vec<(String, Arc<dyn ModelProvider>)>,
    retry: RetryPolicy,
    transcript: Option<Arc<Transcript>>,
}

impl std::fmt::Debug for ModelPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelPool")
            .field("models", &self.model_ids())
            .field("retry", &self.retry)
            .finish()
    }
}

impl ModelPool {
    pub fn new(models: Vec<(String, Arc<dyn ModelProvider>)>) -> Result<Self, RefinerError> {
        if models.is_empty() {
            return Err(RefinerError::EmptyPool);
        }
        for (i, (id, _)) in models.iter().enumerate() {
            if models[..i].iter().any(|(other, _)| other == id) {
                return Err(RefinerError::DuplicateModel(id.clone()));
            }
        }
        Ok(Self {
            models,
            retry: RetryPolicy::default(),
            transcript: None,
        })
    }

    /// Pool in which every model id is served by the same provider.
    pub fn shared(ids: &[&str], provider: Arc<dyn ModelProvider>) -> Result<Self, RefinerError> {
        Self::new(ids.iter().map(|id| (id.to_string(), provider.clone())).collect())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn transcript(&self) -> Option<&Arc<Transcript>> {
        self.transcript.as_ref()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.models.iter().any(|(id, _)| id == model_id)
    }

    /// Queries `model_id`, retrying transport failures with backoff. Every
    /// attempt counts as a query and is written to the transcript.
    pub fn generate(&self, req: &GenerateRequest<'_>) -> Result<Generation, RefinerError> {
        let provider = self
            .models
            .iter()
            .find(|(id, _)| id == req.model_id)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| RefinerError::UnknownModel(req.model_id.to_string()))?;
        let digest = req.conversation.digest();
        let mut usage = UsageRecord::default();
        let mut attempt = 0;
        loop {
            let result = provider.complete(req.model_id, req.conversation, req.seed);
            usage.queries += 1;
            if let Ok(c) = &result {
                usage.tokens += c.prompt_tokens + c.completion_tokens;
            }
            if let Some(t) = &self.transcript {
                let (response, error, retriable, pt, ct) = match &result {
                    Ok(c) => (Some(c.text.clone()), None, false, c.prompt_tokens, c.completion_tokens),
                    Err(e) => (None, Some(e.to_string()), e.is_retriable(), 0, 0),
                };
                t.record(&QueryRecord {
                    function: req.function.to_string(),
                    node: req.node,
                    model_id: req.model_id.to_string(),
                    seed: req.seed,
                    attempt,
                    digest: digest.clone(),
                    conversation: req.conversation.clone(),
                    response,
                    error,
                    retriable,
                    prompt_tokens: pt,
                    completion_tokens: ct,
                })?;
            }
            match result {
                Err(e) if e.is_retriable() && attempt < self.retry.max_retries => {
                    tracing::warn!(model = req.model_id, attempt, error = %e, "retrying model query");
                    let delay = self.retry.backoff_ms.saturating_mul(1 << attempt.min(16));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
                other => {
                    return Ok(Generation {
                        outcome: other.map(|c| c.text),
                        usage,
                    })
                }
            }
        }
    }
}
