//! Deterministic and scripted mock providers.
//!
//! The deterministic mock is a pure function of (request, profile seed): the
//! same request always yields byte-identical output, which is what makes whole
//! runs replayable offline. Field values are synthesized from a stable hash of
//! the request, shaped by the field name:
//!
//! * `code` fields produce a small valid workflow program (so the meta-agent
//!   pipeline can run end to end against mocks),
//! * fields whose name contains `answer` produce one of `A`-`D`,
//! * `q<N>` fields (constitution judging) produce `yes` or `no`,
//! * anything else produces tagged filler text.

use super::{
    ChatModel, ChatRequest, ChatResponse, EmbedModel, ProviderError, ProviderProfile, TokenUsage,
};
use crate::rngutil::{stable_hash, unit_fraction};
use crate::types::Descriptor;
use std::collections::BTreeMap;
use std::sync::Mutex;

/// Stable digest of everything in a request that may influence output.
fn request_digest(request: &ChatRequest) -> u64 {
    let mut parts: Vec<Vec<u8>> = Vec::new();
    for message in &request.messages {
        parts.push(format!("{:?}", message.role).into_bytes());
        parts.push(message.content.clone().into_bytes());
    }
    parts.push(request.temperature.to_bits().to_le_bytes().to_vec());
    for field in &request.response_schema {
        parts.push(field.name.clone().into_bytes());
        parts.push(field.description.clone().into_bytes());
    }
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    stable_hash(&refs)
}

fn approx_tokens(text_len: usize) -> u64 {
    (text_len as u64 / 4).max(1)
}

/// A tiny single-agent program, parameterized by a hash so different mock
/// offspring get distinct names and content.
fn mock_program_json(hash: u64) -> String {
    let tag = format!("{hash:08x}");
    format!(
        concat!(
            "{{\"agents\":[{{\"agent_name\":\"solver\",\"agent_role\":\"You are a careful ",
            "problem solver.\",\"agent_goal\":\"Apply strategy {tag} and answer in the ",
            "required format.\",\"temperature\":0.5}}],",
            "\"meetings\":[{{\"meeting_name\":\"workroom\",\"members\":[\"solver\"]}}],",
            "\"steps\":[",
            "{{\"op\":\"append_chat\",\"chat\":{{\"meeting\":\"workroom\",\"speaker\":\"system\",",
            "\"content\":\"Task: {{task}}\\nAnswer in the exact format: ",
            "{{required_answer_format}}\"}}}},",
            "{{\"op\":\"invoke\",\"agent\":\"solver\",\"meeting\":\"workroom\",",
            "\"schema\":[{{\"name\":\"thinking\",\"description\":\"Step by step reasoning\"}},",
            "{{\"name\":\"answer\",\"description\":\"The final answer in the required format\"}}],",
            "\"bind_prefix\":\"out\"}},",
            "{{\"op\":\"return\",\"template\":\"{{var:out.answer}}\"}}",
            "]}}"
        ),
        tag = tag
    )
}

fn is_yes_no_field(name: &str, description: &str) -> bool {
    let digit_tail = name
        .strip_prefix('q')
        .map(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(false);
    let lower = description.to_ascii_lowercase();
    digit_tail || (lower.contains("yes") && lower.contains("no"))
}

fn synthesize_field(seed: u64, digest: u64, name: &str, description: &str) -> String {
    let h = stable_hash(&[
        &seed.to_le_bytes(),
        &digest.to_le_bytes(),
        name.as_bytes(),
        description.as_bytes(),
    ]);
    if name == "code" {
        return mock_program_json(h);
    }
    if is_yes_no_field(name, description) {
        return if h % 2 == 0 { "yes" } else { "no" }.to_string();
    }
    if name.contains("answer") {
        let letters = ["A", "B", "C", "D"];
        return letters[(h % 4) as usize].to_string();
    }
    format!("mock {name} {h:08x}", h = h & 0xffff_ffff)
}

/// Pure-function mock: output depends only on the request and the profile
/// seed.
pub struct DeterministicChat {
    profile: ProviderProfile,
}

impl DeterministicChat {
    pub fn new(profile: ProviderProfile) -> Self {
        DeterministicChat { profile }
    }
}

impl ChatModel for DeterministicChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let digest = request_digest(request);
        let mut fields = BTreeMap::new();
        for field in &request.response_schema {
            fields.insert(
                field.name.clone(),
                synthesize_field(self.profile.mock_seed, digest, &field.name, &field.description),
            );
        }
        let raw_text = serde_json::to_string(&fields).expect("string map serializes");
        let input_len: usize = request.messages.iter().map(|m| m.content.len()).sum();
        Ok(ChatResponse {
            usage: TokenUsage {
                input_tokens: approx_tokens(input_len),
                output_tokens: approx_tokens(raw_text.len()),
            },
            attempts: 1,
            fields,
            raw_text,
        })
    }
}

/// One scripted turn: either a canned field map or an injected failure.
pub type ScriptedStep = Result<BTreeMap<String, String>, ProviderError>;

/// Queue-backed mock for tests: returns the scripted steps in order.
pub struct ScriptedChat {
    profile: ProviderProfile,
    queue: Mutex<std::collections::VecDeque<ScriptedStep>>,
}

impl ScriptedChat {
    pub fn new(profile: ProviderProfile, steps: Vec<ScriptedStep>) -> Self {
        ScriptedChat {
            profile,
            queue: Mutex::new(steps.into()),
        }
    }

    /// Builds a scripted provider from `(field, value)` response maps.
    pub fn from_responses(responses: Vec<BTreeMap<String, String>>) -> Self {
        ScriptedChat::new(
            ProviderProfile {
                kind: super::ProviderKind::MockScripted,
                ..ProviderProfile::mock("scripted", 0)
            },
            responses.into_iter().map(Ok).collect(),
        )
    }

    pub fn push(&self, step: ScriptedStep) {
        self.queue.lock().unwrap().push_back(step);
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatModel for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        super::with_retries(self.profile.max_retries, self.profile.backoff_ms, || {
            let step = self
                .queue
                .lock()
                .unwrap()
                .pop_front()
                .ok_or(ProviderError::ScriptExhausted)?;
            let scripted = step?;
            // Schema conformance: every schema field present, defaulting to "".
            let mut fields = BTreeMap::new();
            for field in &request.response_schema {
                fields.insert(
                    field.name.clone(),
                    scripted.get(&field.name).cloned().unwrap_or_default(),
                );
            }
            let raw_text = serde_json::to_string(&scripted).expect("string map serializes");
            let input_len: usize = request.messages.iter().map(|m| m.content.len()).sum();
            Ok(ChatResponse {
                usage: TokenUsage {
                    input_tokens: approx_tokens(input_len),
                    output_tokens: approx_tokens(raw_text.len()),
                },
                attempts: 0,
                fields,
                raw_text,
            })
        })
    }
}

/// Seeded-hash embedding mock: stable unit vectors per input text.
pub struct DeterministicEmbed {
    profile: ProviderProfile,
}

impl DeterministicEmbed {
    pub fn new(profile: ProviderProfile) -> Self {
        DeterministicEmbed { profile }
    }
}

impl EmbedModel for DeterministicEmbed {
    fn embed(&self, text: &str, dimensions: usize) -> Result<Descriptor, ProviderError> {
        let mut vector = Vec::with_capacity(dimensions);
        for i in 0..dimensions {
            let h = stable_hash(&[
                &self.profile.mock_seed.to_le_bytes(),
                text.as_bytes(),
                &(i as u64).to_le_bytes(),
            ]);
            vector.push(unit_fraction(h) * 2.0 - 1.0);
        }
        Ok(Descriptor::normalized(vector)?)
    }
}

/// Extracts the first balanced `{...}` block that parses as a JSON object.
/// Used to read structured output out of free-form model text.
pub fn extract_first_json_object(text: &str) -> Option<serde_json::Value> {
    let bytes = text.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if start.is_some() => in_string = true,
            b'{' => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' => {
                if let Some(s) = start {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[s..=i];
                        if let Ok(value) = serde_json::from_str::<serde_json::Value>(candidate) {
                            if value.is_object() {
                                return Some(value);
                            }
                        }
                        start = None;
                    }
                }
            }
            _ => {}
        }
    }
    None
}
