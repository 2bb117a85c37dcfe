//! Model providers: the live HTTP client, a rule-scripted mock, a transcript
//! replayer and a closure adapter.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::transcript::{read_transcript, QueryRecord};
use super::{Conversation, RefinerError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Completion {
    /// Completion with whitespace-counted usage.
    pub fn counted(conversation: &Conversation, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            prompt_tokens: conversation.whitespace_tokens(),
            completion_tokens: text.split_whitespace().count() as u64,
            text,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Network or server-side failure; worth retrying.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The provider refused the request; retrying will not help.
    #[error("request rejected: {0}")]
    Rejected(String),
}

impl ProviderError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait ModelProvider: Send + Sync {
    fn complete(&self, model_id: &str, conversation: &Conversation, seed: u64) -> Result<Completion, ProviderError>;
}

/// Adapts a closure into a provider.
pub struct FnProvider<F>(pub F);

impl<F> ModelProvider for FnProvider<F>
where
    F: Fn(&str, &Conversation, u64) -> Result<Completion, ProviderError> + Send + Sync,
{
    fn complete(&self, model_id: &str, conversation: &Conversation, seed: u64) -> Result<Completion, ProviderError> {
        (self.0)(model_id, conversation, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedError {
    Transport,
    Rejected,
}

/// One mock rule. Every present matcher must hold for the rule to apply.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub digest: Option<String>,
    /// Substring of any message in the conversation.
    pub contains: Option<String>,
    /// Substring of the latest user message.
    pub last_contains: Option<String>,
    /// Exact number of messages in the conversation.
    pub turns: Option<usize>,
    pub response: Option<String>,
    /// Alternatives chosen by `seed % len`.
    #[serde(default)]
    pub responses: Vec<String>,
    pub error: Option<ScriptedError>,
}

impl MockRule {
    fn matches(&self, model_id: &str, conversation: &Conversation, seed: u64) -> bool {
        self.model.as_deref().is_none_or(|m| m == model_id)
            && self.seed.is_none_or(|s| s == seed)
            && self.turns.is_none_or(|t| t == conversation.len())
            && self.digest.as_deref().is_none_or(|d| d == conversation.digest())
            && self
                .contains
                .as_deref()
                .is_none_or(|c| conversation.messages().iter().any(|m| m.content.contains(c)))
            && self
                .last_contains
                .as_deref()
                .is_none_or(|c| conversation.last_user().is_some_and(|u| u.contains(c)))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MockScript {
    #[serde(default)]
    rule: Vec<MockRule>,
}

/// Deterministic provider answering from an ordered rule list. The first
/// matching rule wins; no match is a rejection. Stateless, so the same
/// conversation, model and seed always yield the same outcome.
#[derive(Clone, Debug, Default)]
pub struct MockProvider {
    rules: Vec<MockRule>,
}

impl MockProvider {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    /// Parses a TOML script of `[[rule]]` tables.
    pub fn from_toml(text: &str) -> Result<Self, RefinerError> {
        let script: MockScript = toml::from_str(text).map_err(|e| RefinerError::Config(format!("mock script: {e}")))?;
        for (i, r) in script.rule.iter().enumerate() {
            let outcomes = usize::from(r.response.is_some())
                + usize::from(!r.responses.is_empty())
                + usize::from(r.error.is_some());
            if outcomes != 1 {
                return Err(RefinerError::Config(format!(
                    "mock rule {i} needs exactly one of response, responses, error"
                )));
            }
        }
        Ok(Self::new(script.rule))
    }

    pub fn load(path: &Path) -> Result<Self, RefinerError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RefinerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }
}

impl ModelProvider for MockProvider {
    fn complete(&self, model_id: &str, conversation: &Conversation, seed: u64) -> Result<Completion, ProviderError> {
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(model_id, conversation, seed))
            .ok_or_else(|| ProviderError::Rejected(format!("no mock rule matches model `{model_id}`")))?;
        match rule.error {
            Some(ScriptedError::Transport) => return Err(ProviderError::Transport("scripted".into())),
            Some(ScriptedError::Rejected) => return Err(ProviderError::Rejected("scripted".into())),
            None => {}
        }
        let text = match &rule.response {
            Some(r) => r.clone(),
            None => rule.responses[(seed % rule.responses.len() as u64) as usize].clone(),
        };
        Ok(Completion::counted(conversation, text))
    }
}

type ReplayKey = (String, String, u64);

/// Serves outcomes recorded in a transcript. Calls are keyed by model,
/// conversation digest and seed; repeated keys are served in recorded order.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    queue: Mutex<HashMap<ReplayKey, VecDeque<Result<Completion, ProviderError>>>>,
}

impl ReplayProvider {
    pub fn from_records(records: &[QueryRecord]) -> Self {
        let mut queue: HashMap<ReplayKey, VecDeque<_>> = HashMap::new();
        for r in records {
            let outcome = match (&r.response, &r.error) {
                (Some(text), _) => Ok(Completion {
                    text: text.clone(),
                    prompt_tokens: r.prompt_tokens,
                    completion_tokens: r.completion_tokens,
                }),
                (None, Some(e)) if r.retriable => Err(ProviderError::Transport(e.clone())),
                (None, e) => Err(ProviderError::Rejected(e.clone().unwrap_or_default())),
            };
            queue
                .entry((r.model_id.clone(), r.digest.clone(), r.seed))
                .or_default()
                .push_back(outcome);
        }
        Self {
            queue: Mutex::new(queue),
        }
    }

    pub fn load(path: &Path) -> Result<Self, RefinerError> {
        let t = read_transcript(path)?;
        Ok(Self::from_records(&t.queries))
    }

    /// Recorded outcomes not yet served.
    pub fn remaining(&self) -> usize {
        self.queue
            .lock()
            .expect("replay queue poisoned")
            .values()
            .map(VecDeque::len)
            .sum()
    }
}

impl ModelProvider for ReplayProvider {
    fn complete(&self, model_id: &str, conversation: &Conversation, seed: u64) -> Result<Completion, ProviderError> {
        let key = (model_id.to_string(), conversation.digest(), seed);
        self.queue
            .lock()
            .expect("replay queue poisoned")
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .unwrap_or_else(|| {
                Err(ProviderError::Rejected(format!(
                    "transcript has no response for model `{model_id}`, digest {}, seed {seed}",
                    key.1
                )))
            })
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    api_model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
}

impl HttpProvider {
    pub fn new(
        endpoint: impl Into<String>,
        api_model: impl Into<String>,
        api_key: Option<String>,
        temperature: Option<f64>,
        timeout: Duration,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.into(),
            api_model: api_model.into(),
            api_key,
            temperature,
        }
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    fn request_body(&self, conversation: &Conversation, seed: u64) -> Value {
        let messages: Vec<Value> = conversation
            .messages()
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = json!({"model": self.api_model, "messages": messages, "seed": seed});
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

/// Reads text and usage out of a chat-completion response document.
pub fn parse_chat_response(doc: &Value, conversation: &Conversation) -> Result<Completion, ProviderError> {
    let text = doc
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Rejected("response has no choices[0].message.content".into()))?;
    let usage = |k: &str| doc.pointer(&format!("/usage/{k}")).and_then(Value::as_u64);
    let counted = Completion::counted(conversation, text);
    Ok(Completion {
        prompt_tokens: usage("prompt_tokens").unwrap_or(counted.prompt_tokens),
        completion_tokens: usage("completion_tokens").unwrap_or(counted.completion_tokens),
        text: counted.text,
    })
}

impl ModelProvider for HttpProvider {
    fn complete(&self, _model_id: &str, conversation: &Conversation, seed: u64) -> Result<Completion, ProviderError> {
        let mut req = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(conversation, seed))
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Rejected(format!("HTTP {status}: {}", detail.trim())));
        }
        let doc: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(format!("malformed response body: {e}")))?;
        parse_chat_response(&doc, conversation)
    }
}

/// Provider construction settings for one pool entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub provider: ProviderKind,
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint; defaults to `id`.
    pub api_model: Option<String>,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Mock,
}

impl ModelConfig {
    pub fn http_provider(&self, timeout: Duration) -> Result<HttpProvider, RefinerError> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| RefinerError::Config(format!("model `{}` needs an endpoint", self.id)))?;
        let api_key = match &self.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                RefinerError::Config(format!("model `{}`: environment variable {var} is not set", self.id))
            })?),
            None => None,
        };
        Ok(HttpProvider::new(
            endpoint,
            self.api_model.clone().unwrap_or_else(|| self.id.clone()),
            api_key,
            self.temperature,
            timeout,
        ))
    }
}
