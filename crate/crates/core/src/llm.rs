//! Chat completion clients.
//!
//! Two backends: an HTTP client for the de-facto chat-completions schema
//! (`POST {model, messages, temperature} -> {choices: [{message: {content}}]}`)
//! and a scripted client that replays a fixed list of responses by call
//! ordinal, which makes agent runs fully deterministic in tests.

use crate::embedding::RetryPolicy;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("chat backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("response of {actual} chars exceeds the {limit} char limit")]
    ResponseTooLong { actual: usize, limit: usize },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("scripted client exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("message {index} with role {role} has empty content")]
    EmptyMessage { index: usize, role: Role },
    #[error("invalid completion params: {0}")]
    InvalidParams(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid script file: {0}")]
    InvalidScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

fn default_max_output_chars() -> usize {
    32_768
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model_name: String,
    pub temperature: f64,
    #[serde(default = "default_max_output_chars")]
    pub max_output_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-4o".to_string(),
            temperature: 0.2,
            max_output_chars: default_max_output_chars(),
            seed: None,
        }
    }
}

fn validate(messages: &[ChatMessage], params: &CompletionParams) -> Result<(), LlmError> {
    assert!(!messages.is_empty(), "complete() requires at least one message");
    if !(0.0..=2.0).contains(&params.temperature) {
        return Err(LlmError::InvalidParams(format!(
            "temperature {} outside [0, 2]",
            params.temperature
        )));
    }
    for (index, m) in messages.iter().enumerate() {
        if matches!(m.role, Role::System | Role::User) && m.content.trim().is_empty() {
            return Err(LlmError::EmptyMessage {
                index,
                role: m.role,
            });
        }
    }
    Ok(())
}

fn check_response(text: String, params: &CompletionParams) -> Result<String, LlmError> {
    if text.trim().is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    let len = text.chars().count();
    if len > params.max_output_chars {
        return Err(LlmError::ResponseTooLong {
            actual: len,
            limit: params.max_output_chars,
        });
    }
    Ok(text)
}

/// A chat-completion backend. One completion is in flight per agent run;
/// distinct runs use independent clients.
pub trait ChatClient: Send {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError>;
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpChatClient {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`. The
    /// credential is read from the environment and never persisted.
    pub fn new(base_url: &str, api_key_env: Option<&str>, retry: RetryPolicy) -> Self {
        let agent = retry.agent();
        Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key_env.and_then(|var| std::env::var(var).ok()),
            retry,
            agent,
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError> {
        validate(messages, params)?;
        let body = serde_json::to_value(ChatRequest {
            model: &params.model_name,
            messages,
            temperature: params.temperature,
            seed: params.seed,
        })
        .expect("request serialization cannot fail");

        let response: ChatResponse = self
            .retry
            .run(|| {
                let mut req = self.agent.post(&self.endpoint);
                if let Some(key) = &self.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.send_json(&body)
                    .map_err(|e| e.to_string())?
                    .body_mut()
                    .read_json::<ChatResponse>()
                    .map_err(|e| format!("invalid response body: {e}"))
            })
            .map_err(|(attempts, reason)| LlmError::BackendUnavailable { attempts, reason })?;

        let content = response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        check_response(content, params)
    }
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Replays a fixed queue of responses, keyed by call ordinal.
pub struct ScriptedClient {
    responses: Mutex<std::vec::IntoIter<String>>,
    total: usize,
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>) -> Self {
        let total = responses.len();
        Self {
            responses: Mutex::new(responses.into_iter()),
            total,
        }
    }

    /// Loads a script file: a JSON array of response strings.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let raw = std::fs::read_to_string(path)?;
        let responses: Vec<String> = serde_json::from_str(&raw)
            .map_err(|e| LlmError::InvalidScript(e.to_string()))?;
        Ok(Self::new(responses))
    }
}

impl ChatClient for ScriptedClient {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError> {
        validate(messages, params)?;
        let next = self
            .responses
            .lock()
            .expect("script queue poisoned")
            .next()
            .ok_or(LlmError::ScriptExhausted(self.total))?;
        check_response(next, params)
    }
}

/// Wraps a client and counts completions; used to assert transcript
/// completeness in tests.
pub struct CountingClient<C: ChatClient> {
    inner: C,
    calls: std::sync::atomic::AtomicUsize,
}

impl<C: ChatClient> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl<C: ChatClient> ChatClient for CountingClient<C> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, LlmError> {
        self.calls
            .fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.complete(messages, params)
    }
}
