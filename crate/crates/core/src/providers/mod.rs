//! Provider contracts for chat-completion and text-embedding models.
//!
//! Three implementations: a deterministic mock (pure function of request and
//! seed), a scripted mock (queue of canned responses for tests), and an
//! HTTP-backed provider speaking a chat-completions-style JSON POST.

mod http;
mod mock;

pub use http::{HttpChatProvider, HttpEmbedProvider};
pub use mock::{
    extract_first_json_object, DeterministicChat, DeterministicEmbed, ScriptedChat, ScriptedStep,
};

use crate::types::{Descriptor, DescriptorError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One named output field the model must produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaField {
    pub name: String,
    pub description: String,
}

impl SchemaField {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        SchemaField {
            name: name.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub response_schema: Vec<SchemaField>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for field in &self.response_schema {
            if !seen.insert(field.name.as_str()) {
                return Err(ProviderError::InvalidRequest(format!(
                    "duplicate schema field {:?}",
                    field.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// One entry per schema field (possibly empty strings).
    pub fields: BTreeMap<String, String>,
    pub raw_text: String,
    pub usage: TokenUsage,
    /// Attempts spent, including retries. 1 on first-try success.
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    MockDeterministic,
    MockScripted,
    Http,
}

/// Configuration for one model binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env_var: Option<String>,
    pub max_retries: u32,
    pub timeout_ms: u64,
    /// Base delay for exponential backoff between retries.
    #[serde(default)]
    pub backoff_ms: u64,
    /// Seed for the mock kinds.
    #[serde(default)]
    pub mock_seed: u64,
    /// Rate limit for the HTTP kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
}

impl ProviderProfile {
    pub fn mock(model_name: &str, mock_seed: u64) -> Self {
        ProviderProfile {
            kind: ProviderKind::MockDeterministic,
            endpoint: None,
            model_name: model_name.to_string(),
            credential_env_var: None,
            max_retries: 2,
            timeout_ms: 30_000,
            backoff_ms: 0,
            mock_seed,
            requests_per_second: None,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.kind == ProviderKind::Http {
            if self.endpoint.is_none() {
                problems.push("http provider requires an endpoint".to_string());
            }
            if self.credential_env_var.is_none() {
                problems.push("http provider requires credential_env_var".to_string());
            }
        }
        problems
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("timeout after {0} ms")]
    Timeout(u64),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("response does not conform to schema after retries: {0}")]
    SchemaConformance(String),
    #[error("embedding dimension mismatch: wanted {wanted}, got {got}")]
    DimensionMismatch { wanted: usize, got: usize },
    #[error("scripted provider queue is empty")]
    ScriptExhausted,
    #[error("token budget exhausted ({used} of {cap})")]
    BudgetExhausted { used: u64, cap: u64 },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

impl ProviderError {
    /// Retryable errors: transient transport problems and timeouts.
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_) | ProviderError::Timeout(_))
    }
}

/// A chat-completion model.
pub trait ChatModel: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

/// A text-embedding model.
pub trait EmbedModel: Send + Sync {
    fn embed(&self, text: &str, dimensions: usize) -> Result<Descriptor, ProviderError>;
}

/// Builds a chat model from a profile. Scripted providers start with an empty
/// queue; tests construct [`ScriptedChat`] directly instead.
pub fn build_chat_model(profile: &ProviderProfile) -> Arc<dyn ChatModel> {
    match profile.kind {
        ProviderKind::MockDeterministic => Arc::new(DeterministicChat::new(profile.clone())),
        ProviderKind::MockScripted => Arc::new(ScriptedChat::new(profile.clone(), Vec::new())),
        ProviderKind::Http => Arc::new(HttpChatProvider::new(profile.clone())),
    }
}

pub fn build_embed_model(profile: &ProviderProfile) -> Arc<dyn EmbedModel> {
    match profile.kind {
        ProviderKind::Http => Arc::new(HttpEmbedProvider::new(profile.clone())),
        _ => Arc::new(DeterministicEmbed::new(profile.clone())),
    }
}

/// Convenience entry points matching the operation contracts.
pub fn chat(profile: &ProviderProfile, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
    build_chat_model(profile).chat(request)
}

pub fn embed(
    profile: &ProviderProfile,
    text: &str,
    dimensions: usize,
) -> Result<Descriptor, ProviderError> {
    build_embed_model(profile).embed(text, dimensions)
}

/// Runs `attempt` up to `max_retries + 1` times, backing off exponentially on
/// transient failures. Returns the successful response with the attempt count
/// recorded.
pub fn with_retries<F>(
    max_retries: u32,
    backoff_ms: u64,
    mut attempt: F,
) -> Result<ChatResponse, ProviderError>
where
    F: FnMut() -> Result<ChatResponse, ProviderError>,
{
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match attempt() {
            Ok(mut response) => {
                response.attempts = attempts;
                return Ok(response);
            }
            Err(err) if err.is_transient() && attempts <= max_retries => {
                if backoff_ms > 0 {
                    let delay = backoff_ms.saturating_mul(1u64 << (attempts - 1).min(16));
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
            Err(err) => return Err(err),
        }
    }
}

/// Per-run token accounting. Calls fail once the cap is reached.
#[derive(Debug)]
pub struct BudgetTracker {
    used: AtomicU64,
    cap: Option<u64>,
}

impl BudgetTracker {
    pub fn new(cap: Option<u64>) -> Arc<Self> {
        Arc::new(BudgetTracker {
            used: AtomicU64::new(0),
            cap,
        })
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn check(&self) -> Result<(), ProviderError> {
        if let Some(cap) = self.cap {
            let used = self.used();
            if used >= cap {
                return Err(ProviderError::BudgetExhausted { used, cap });
            }
        }
        Ok(())
    }

    pub fn record(&self, usage: TokenUsage) {
        self.used.fetch_add(usage.total(), Ordering::Relaxed);
    }
}

/// Wraps a chat model with budget accounting.
pub struct BudgetedChat {
    inner: Arc<dyn ChatModel>,
    tracker: Arc<BudgetTracker>,
}

impl BudgetedChat {
    pub fn new(inner: Arc<dyn ChatModel>, tracker: Arc<BudgetTracker>) -> Arc<Self> {
        Arc::new(BudgetedChat { inner, tracker })
    }
}

impl ChatModel for BudgetedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.tracker.check()?;
        let response = self.inner.chat(request)?;
        self.tracker.record(response.usage);
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation_catches_duplicates_and_empty() {
        let empty = ChatRequest {
            messages: vec![],
            temperature: 0.5,
            response_schema: vec![],
        };
        assert!(empty.validate().is_err());

        let dup = ChatRequest {
            messages: vec![Message::user("hi")],
            temperature: 0.5,
            response_schema: vec![SchemaField::new("a", ""), SchemaField::new("a", "")],
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn budget_tracker_stops_at_cap() {
        let tracker = BudgetTracker::new(Some(10));
        tracker.record(TokenUsage {
            input_tokens: 6,
            output_tokens: 4,
        });
        assert!(matches!(
            tracker.check(),
            Err(ProviderError::BudgetExhausted { used: 10, cap: 10 })
        ));
    }
}
