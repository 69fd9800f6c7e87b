//! HTTP-backed provider speaking a chat-completions-style JSON POST.
//!
//! Structured output is obtained by instructing the model to emit a JSON
//! object with the schema's keys and parsing the first well-formed object out
//! of the reply, so no vendor-specific structured-output feature is required.

use super::{
    ChatModel, ChatRequest, ChatResponse, EmbedModel, ProviderError, ProviderProfile, Role,
    TokenUsage,
};
use crate::types::Descriptor;
use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Renders the schema instruction appended as a trailing system message.
pub fn schema_instruction(request: &ChatRequest) -> String {
    let mut out = String::from(
        "Respond with a single JSON object and nothing else. It must contain exactly these keys:\n",
    );
    for field in &request.response_schema {
        out.push_str(&format!("- \"{}\": {}\n", field.name, field.description));
    }
    out
}

/// Builds the JSON POST body for a chat request.
pub fn build_chat_body(profile: &ProviderProfile, request: &ChatRequest) -> serde_json::Value {
    let mut messages: Vec<serde_json::Value> = request
        .messages
        .iter()
        .map(|m| serde_json::json!({"role": role_name(m.role), "content": m.content}))
        .collect();
    if !request.response_schema.is_empty() {
        messages.push(serde_json::json!({
            "role": "system",
            "content": schema_instruction(request),
        }));
    }
    serde_json::json!({
        "model": profile.model_name,
        "messages": messages,
        "temperature": request.temperature,
    })
}

/// Parses a chat-completions response body into a [`ChatResponse`].
pub fn parse_chat_body(
    request: &ChatRequest,
    body: &serde_json::Value,
) -> Result<ChatResponse, ProviderError> {
    let content = body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| ProviderError::SchemaConformance("missing message content".into()))?;
    let usage = TokenUsage {
        input_tokens: body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        output_tokens: body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    let mut fields = BTreeMap::new();
    if !request.response_schema.is_empty() {
        let object = super::extract_first_json_object(content).ok_or_else(|| {
            ProviderError::SchemaConformance("no JSON object found in model output".into())
        })?;
        for field in &request.response_schema {
            let value = match object.get(&field.name) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(serde_json::Value::Null) | None => String::new(),
                Some(other) => other.to_string(),
            };
            fields.insert(field.name.clone(), value);
        }
    }
    Ok(ChatResponse {
        fields,
        raw_text: content.to_string(),
        usage,
        attempts: 1,
    })
}

/// Serializes bursts to at most `requests_per_second`.
struct RateLimiter {
    min_interval: Option<Duration>,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: Option<f64>) -> Self {
        RateLimiter {
            min_interval: requests_per_second
                .filter(|rps| *rps > 0.0)
                .map(|rps| Duration::from_secs_f64(1.0 / rps)),
            last: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let Some(interval) = self.min_interval else {
            return;
        };
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

fn credential(profile: &ProviderProfile) -> Result<String, ProviderError> {
    let var = profile
        .credential_env_var
        .as_deref()
        .ok_or_else(|| ProviderError::Auth("no credential_env_var configured".into()))?;
    std::env::var(var).map_err(|_| ProviderError::Auth(format!("environment variable {var} not set")))
}

fn classify_status(status: u16, body: String) -> ProviderError {
    match status {
        401 | 403 => ProviderError::Auth(format!("status {status}: {body}")),
        408 | 429 | 500..=599 => ProviderError::Transient(format!("status {status}: {body}")),
        _ => ProviderError::SchemaConformance(format!("status {status}: {body}")),
    }
}

pub struct HttpChatProvider {
    profile: ProviderProfile,
    limiter: RateLimiter,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(profile: ProviderProfile) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(profile.timeout_ms))
            .build()
            .expect("client construction");
        HttpChatProvider {
            limiter: RateLimiter::new(profile.requests_per_second),
            profile,
            client,
        }
    }

    fn post(&self, body: &serde_json::Value) -> Result<serde_json::Value, ProviderError> {
        let endpoint = self
            .profile
            .endpoint
            .as_deref()
            .ok_or_else(|| ProviderError::InvalidRequest("http provider has no endpoint".into()))?;
        let token = credential(&self.profile)?;
        self.limiter.wait();
        let response = self
            .client
            .post(endpoint)
            .bearer_auth(token)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout(self.profile.timeout_ms)
                } else {
                    ProviderError::Transient(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, text));
        }
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::SchemaConformance(format!("invalid JSON body: {e}")))
    }
}

impl ChatModel for HttpChatProvider {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let body = build_chat_body(&self.profile, request);
        super::with_retries(self.profile.max_retries, self.profile.backoff_ms, || {
            let response_body = self.post(&body)?;
            parse_chat_body(request, &response_body)
        })
    }
}

pub struct HttpEmbedProvider {
    inner: HttpChatProvider,
}

impl HttpEmbedProvider {
    pub fn new(profile: ProviderProfile) -> Self {
        HttpEmbedProvider {
            inner: HttpChatProvider::new(profile),
        }
    }
}

/// Parses an embeddings response body, truncating and renormalizing when the
/// service cannot produce reduced dimensions natively.
pub fn parse_embedding_body(
    body: &serde_json::Value,
    dimensions: usize,
) -> Result<Descriptor, ProviderError> {
    let raw = body["data"][0]["embedding"]
        .as_array()
        .ok_or_else(|| ProviderError::SchemaConformance("missing embedding array".into()))?;
    let mut vector: Vec<f64> = raw.iter().filter_map(|v| v.as_f64()).collect();
    if vector.len() != raw.len() {
        return Err(ProviderError::SchemaConformance(
            "non-numeric embedding entries".into(),
        ));
    }
    if vector.len() < dimensions {
        return Err(ProviderError::DimensionMismatch {
            wanted: dimensions,
            got: vector.len(),
        });
    }
    vector.truncate(dimensions);
    Ok(Descriptor::normalized(vector)?)
}

impl EmbedModel for HttpEmbedProvider {
    fn embed(&self, text: &str, dimensions: usize) -> Result<Descriptor, ProviderError> {
        let body = serde_json::json!({
            "model": self.inner.profile.model_name,
            "input": text,
            "dimensions": dimensions,
        });
        let response_body = self.inner.post(&body)?;
        parse_embedding_body(&response_body, dimensions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{Message, SchemaField};

    fn sample_request() -> ChatRequest {
        ChatRequest {
            messages: vec![Message::system("sys"), Message::user("hello")],
            temperature: 0.7,
            response_schema: vec![SchemaField::new("answer", "final answer")],
        }
    }

    #[test]
    fn chat_body_appends_schema_instruction() {
        let profile = ProviderProfile {
            kind: crate::providers::ProviderKind::Http,
            endpoint: Some("http://localhost/v1/chat".into()),
            credential_env_var: Some("KEY".into()),
            ..ProviderProfile::mock("gpt-test", 0)
        };
        let body = build_chat_body(&profile, &sample_request());
        assert_eq!(body["model"], "gpt-test");
        let messages = body["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 3);
        assert!(messages[2]["content"]
            .as_str()
            .unwrap()
            .contains("\"answer\""));
    }

    #[test]
    fn parse_chat_body_extracts_fields_and_usage() {
        let body = serde_json::json!({
            "choices": [{"message": {"content": "sure: {\"answer\": \"B\"} done"}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 5},
        });
        let response = parse_chat_body(&sample_request(), &body).unwrap();
        assert_eq!(response.fields["answer"], "B");
        assert_eq!(response.usage.input_tokens, 11);
        assert_eq!(response.usage.output_tokens, 5);
    }

    #[test]
    fn parse_chat_body_rejects_nonconforming_output() {
        let body = serde_json::json!({
            "choices": [{"message": {"content": "no json here"}}],
        });
        assert!(matches!(
            parse_chat_body(&sample_request(), &body),
            Err(ProviderError::SchemaConformance(_))
        ));
    }

    #[test]
    fn embedding_body_truncates_and_renormalizes() {
        let raw: Vec<f64> = (1..=16).map(|i| i as f64).collect();
        let body = serde_json::json!({"data": [{"embedding": raw}]});
        let descriptor = parse_embedding_body(&body, 12).unwrap();
        assert_eq!(descriptor.vector.len(), 12);
        assert!((descriptor.norm() - 1.0).abs() < 1e-9);

        let short = serde_json::json!({"data": [{"embedding": [1.0, 2.0]}]});
        assert!(matches!(
            parse_embedding_body(&short, 12),
            Err(ProviderError::DimensionMismatch { wanted: 12, got: 2 })
        ));
    }
}
