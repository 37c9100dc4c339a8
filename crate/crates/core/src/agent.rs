//! The ReAct agent loop: alternate model thoughts and tool actions, feed
//! observations back, enforce step budgets, and record everything in a
//! replayable transcript.
//!
//! Model output is expected to carry a `Thought:` line followed by an action
//! block: the first balanced JSON object containing `action` and
//! `action_input` keys, conventionally after a literal `Action:` token.
//! Anything after the action block is ignored. Parse failures are fed back to
//! the model as corrective messages up to a retry budget.
//!
//! # Persisted transcript schema
//!
//! Each run is saved as one JSON file with two top-level keys:
//!
//! ```json
//! {
//!   "envelope": {"run_id", "started_unix_ms", "finished_unix_ms",
//!                "config_hash", "attempt"},
//!   "transcript": {
//!     "config": {...},
//!     "outcome": "success" | "max_steps_exceeded" | "aborted",
//!     "steps": [{"ordinal", "kind": "thought" | "tool_call" | "observation"
//!                | "final_answer" | "parse_error", ...payload}],
//!     "exchanges": [{"request": [{"role", "content"}], "response"}]
//!   }
//! }
//! ```
//!
//! Identity and wall-clock timestamps live only in the envelope, so two runs
//! of the same configuration produce byte-identical `transcript` bodies.

use crate::embedding::Embedder;
use crate::llm::{ChatClient, ChatMessage, CompletionParams, LlmError};
use crate::vectorstore::IndexedCorpus;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Observation text per retrieved chunk is capped to bound prompt growth.
const OBSERVATION_CHUNK_CHARS: usize = 500;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("model output contains no action block")]
    NoActionBlock,
    #[error("action block is malformed: {0}")]
    MalformedAction(String),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("step budget of {max_steps} exhausted before final_answer")]
    MaxStepsExceeded {
        max_steps: usize,
        transcript: Box<Transcript>,
    },
    #[error("model output unparseable after {retries} consecutive retries")]
    ParseRetriesExhausted {
        retries: usize,
        transcript: Box<Transcript>,
    },
    #[error("completion backend failed: {source}")]
    Llm {
        source: LlmError,
        transcript: Box<Transcript>,
    },
}

impl AgentError {
    /// The partial transcript recorded up to the failure.
    pub fn transcript(&self) -> &Transcript {
        match self {
            AgentError::MaxStepsExceeded { transcript, .. } => transcript,
            AgentError::ParseRetriesExhausted { transcript, .. } => transcript,
            AgentError::Llm { transcript, .. } => transcript,
        }
    }

    pub fn into_transcript(self) -> Transcript {
        match self {
            AgentError::MaxStepsExceeded { transcript, .. } => *transcript,
            AgentError::ParseRetriesExhausted { transcript, .. } => *transcript,
            AgentError::Llm { transcript, .. } => *transcript,
        }
    }
}

/// A parsed model action: tool name plus its argument map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
}

/// Extracts the thought prose and the first well-formed action block from raw
/// model output.
pub fn parse_step(raw: &str) -> Result<(String, ParsedAction), ParseError> {
    let bytes = raw.as_bytes();
    let mut saw_candidate = false;
    let mut last_problem = String::new();

    for (start, _) in raw.match_indices('{') {
        match balanced_object_end(bytes, start) {
            Some(end) => {
                saw_candidate = true;
                let slice = &raw[start..end];
                match serde_json::from_str::<Value>(slice) {
                    Ok(Value::Object(map)) => {
                        let action = map.get("action").and_then(Value::as_str);
                        let input = map.get("action_input").and_then(Value::as_object);
                        match (action, input) {
                            (Some(tool_name), Some(arguments)) => {
                                let thought = extract_thought(&raw[..start]);
                                return Ok((
                                    thought,
                                    ParsedAction {
                                        tool_name: tool_name.to_string(),
                                        arguments: arguments.clone(),
                                    },
                                ));
                            }
                            _ => {
                                last_problem = "object lacks string `action` and object \
                                                `action_input` keys"
                                    .to_string();
                            }
                        }
                    }
                    Ok(_) => unreachable!("slice starting with '{{' parses to an object"),
                    Err(e) => last_problem = format!("candidate block is not valid JSON: {e}"),
                }
            }
            None => {
                saw_candidate = true;
                if last_problem.is_empty() {
                    last_problem = "unbalanced braces in action block".to_string();
                }
            }
        }
    }

    if saw_candidate || raw.contains("Action:") {
        Err(ParseError::MalformedAction(last_problem))
    } else {
        Err(ParseError::NoActionBlock)
    }
}

/// Prose after the first `Thought:` marker, with any trailing `Action:` token
/// removed; falls back to everything before the action block.
fn extract_thought(prefix: &str) -> String {
    let after_marker = match prefix.find("Thought:") {
        Some(pos) => &prefix[pos + "Thought:".len()..],
        None => prefix,
    };
    let cut = after_marker.rfind("Action:").unwrap_or(after_marker.len());
    after_marker[..cut].trim().to_string()
}

/// Byte offset one past the matching `}` for the object opening at `start`,
/// or `None` when the braces never balance. String literals are honored.
fn balanced_object_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if *b == b'\\' {
                escaped = true;
            } else if *b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub description: String,
}

type ToolHandler = Box<dyn Fn(&Map<String, Value>) -> String + Send + Sync>;

pub struct Tool {
    pub name: String,
    pub description: String,
    pub arg_schema: Vec<ArgSpec>,
    handler: ToolHandler,
}

impl Tool {
    pub fn new(
        name: &str,
        description: &str,
        arg_schema: Vec<ArgSpec>,
        handler: ToolHandler,
    ) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            arg_schema,
            handler,
        }
    }

    pub fn invoke(&self, arguments: &Map<String, Value>) -> String {
        (self.handler)(arguments)
    }
}

pub const FINAL_ANSWER: &str = "final_answer";

/// Registry of uniquely named tools; `final_answer` is always present.
pub struct ToolRegistry {
    tools: Vec<Tool>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        let final_answer = Tool::new(
            FINAL_ANSWER,
            "Submit the final answer and stop.",
            vec![ArgSpec {
                name: "answer".to_string(),
                description: "the answer payload".to_string(),
            }],
            Box::new(|_| String::new()),
        );
        Self {
            tools: vec![final_answer],
        }
    }

    /// Panics on duplicate tool names; registries are assembled statically.
    pub fn register(&mut self, tool: Tool) {
        assert!(
            self.tools.iter().all(|t| t.name != tool.name),
            "duplicate tool name: {}",
            tool.name
        );
        self.tools.push(tool);
    }

    pub fn get(&self, name: &str) -> Option<&Tool> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn tools(&self) -> &[Tool] {
        &self.tools
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Builds the retrieval tool over an indexed corpus. Chunks already shown to
/// the agent earlier in the run are suppressed from later observations, and
/// the suppression count is stated so the model knows retrieval saturated.
pub fn retriever_tool(
    corpus: Arc<IndexedCorpus>,
    embedder: Arc<dyn Embedder>,
    k: usize,
) -> Tool {
    assert!(!corpus.store.is_empty(), "retriever needs a non-empty store");
    let seen: Mutex<HashSet<String>> = Mutex::new(HashSet::new());
    let handler: ToolHandler = Box::new(move |arguments| {
        let query = match arguments.get("query").and_then(Value::as_str) {
            Some(q) if !q.trim().is_empty() => q,
            _ => return "retriever error: missing required string argument 'query'".to_string(),
        };
        let query_vec = match embedder.embed_one(query) {
            Ok(v) => v,
            Err(e) => return format!("retriever error: {e}"),
        };
        let hits = match corpus.store.search(&query_vec, k) {
            Ok(h) => h,
            Err(e) => return format!("retriever error: {e}"),
        };

        let mut seen = seen.lock().expect("retriever state poisoned");
        let mut lines = Vec::new();
        let mut suppressed = 0usize;
        let mut shown = 0usize;
        for hit in hits {
            if !seen.insert(hit.chunk_id.clone()) {
                suppressed += 1;
                continue;
            }
            shown += 1;
            let text = corpus
                .text_of(&hit.chunk_id)
                .unwrap_or("<missing chunk text>");
            lines.push(format!(
                "Document {} (score {:.4}): {}",
                shown,
                hit.score,
                truncate_chars(text, OBSERVATION_CHUNK_CHARS)
            ));
        }
        if suppressed > 0 {
            lines.push(format!(
                "({suppressed} previously retrieved document{} suppressed)",
                if suppressed == 1 { "" } else { "s" }
            ));
        }
        if shown == 0 && suppressed == 0 {
            lines.push("No documents retrieved.".to_string());
        }
        lines.join("\n")
    });

    Tool::new(
        "retriever",
        "Run a semantic similarity search over the indexed documents and \
         return the most relevant ones.",
        vec![ArgSpec {
            name: "query".to_string(),
            description: "free-text search query".to_string(),
        }],
        handler,
    )
}

fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let mut out: String = text.chars().take(max_chars).collect();
    out.push('…');
    out
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPayload {
    Thought { text: String },
    ToolCall { tool: String, arguments: Map<String, Value> },
    Observation { text: String },
    FinalAnswer { arguments: Map<String, Value> },
    ParseError { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub ordinal: usize,
    #[serde(flatten)]
    pub payload: StepPayload,
}

impl AgentStep {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            StepPayload::Thought { .. } => "thought",
            StepPayload::ToolCall { .. } => "tool_call",
            StepPayload::Observation { .. } => "observation",
            StepPayload::FinalAnswer { .. } => "final_answer",
            StepPayload::ParseError { .. } => "parse_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Success,
    MaxStepsExceeded,
    Aborted,
}

/// One completion request/response pair, embedded verbatim so a run can be
/// replayed or audited offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Vec<ChatMessage>,
    pub response: String,
}

/// The replayable body of an agent run. Identity and timestamps live in the
/// envelope (see [`TranscriptEnvelope`]) so determinism checks can ignore them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: Value,
    pub outcome: RunOutcome,
    pub steps: Vec<AgentStep>,
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    fn new(config: Value) -> Self {
        Self {
            config,
            outcome: RunOutcome::Aborted,
            steps: Vec::new(),
            exchanges: Vec::new(),
        }
    }

    fn push(&mut self, payload: StepPayload) {
        self.steps.push(AgentStep {
            ordinal: self.steps.len(),
            payload,
        });
    }

    pub fn step_kinds(&self) -> Vec<&'static str> {
        self.steps.iter().map(AgentStep::kind).collect()
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.steps.iter().filter(|s| s.kind() == kind).count()
    }

    /// The `final_answer` argument map of a successful run.
    pub fn final_answer(&self) -> Option<&Map<String, Value>> {
        self.steps.iter().rev().find_map(|s| match &s.payload {
            StepPayload::FinalAnswer { arguments } => Some(arguments),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEnvelope {
    pub run_id: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub config_hash: String,
    /// 1-based attempt number when a round was re-run.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedTranscript {
    pub envelope: TranscriptEnvelope,
    pub transcript: Transcript,
}

impl PersistedTranscript {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let data = serde_json::to_vec_pretty(self).expect("transcript serializes");
        std::fs::write(path, data)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentLimits {
    pub max_steps: usize,
    pub max_parse_retries: usize,
}

impl Default for AgentLimits {
    fn default() -> Self {
        Self {
            max_steps: 8,
            max_parse_retries: 2,
        }
    }
}

/// Builds the system prompt: tool inventory, the required response format,
/// and the self-evaluation checklist the agent applies before answering.
pub fn system_prompt(registry: &ToolRegistry) -> String {
    let mut tool_lines = String::new();
    for tool in registry.tools() {
        let args: Vec<String> = tool
            .arg_schema
            .iter()
            .map(|a| format!("{}: {}", a.name, a.description))
            .collect();
        tool_lines.push_str(&format!(
            "- {}: {} (arguments: {})\n",
            tool.name,
            tool.description,
            args.join(", ")
        ));
    }
    format!(
        "You are a research assistant working over an indexed document collection.\n\
         Available tools:\n{tool_lines}\
         Respond on every turn with your reasoning after `Thought:` followed by exactly one \
         action block:\n\
         Action:\n\
         {{\"action\": \"<tool name>\", \"action_input\": {{...}}}}\n\
         After each observation, evaluate the retrieved results before answering. If they are \
         failing to fully address the initial query, lacking factual consistency, or containing \
         ambiguous or conflicting information, reformulate the query and call the retriever \
         again with a different phrasing. Only call {FINAL_ANSWER} once the retrieved evidence \
         supports a complete answer."
    )
}

/// Runs the ReAct loop until `final_answer` or a budget is exhausted.
///
/// The step budget counts tool invocations and parse retries together; the
/// retry budget bounds *consecutive* unparseable completions. Every
/// completion request/response lands in the transcript, including failures.
pub fn run(
    task_prompt: &str,
    registry: &ToolRegistry,
    client: &dyn ChatClient,
    params: &CompletionParams,
    limits: &AgentLimits,
    config_snapshot: Value,
) -> Result<(Map<String, Value>, Transcript), AgentError> {
    assert!(limits.max_steps >= 1, "max_steps must be at least 1");
    assert!(
        registry.get(FINAL_ANSWER).is_some(),
        "registry must contain final_answer"
    );

    let mut transcript = Transcript::new(config_snapshot);
    let mut messages = vec![
        ChatMessage::system(system_prompt(registry)),
        ChatMessage::user(task_prompt),
    ];
    let mut steps_used = 0usize;
    let mut consecutive_parse_failures = 0usize;

    loop {
        if steps_used >= limits.max_steps {
            transcript.outcome = RunOutcome::MaxStepsExceeded;
            return Err(AgentError::MaxStepsExceeded {
                max_steps: limits.max_steps,
                transcript: Box::new(transcript),
            });
        }

        let response = match client.complete(&messages, params) {
            Ok(r) => r,
            Err(source) => {
                transcript.outcome = RunOutcome::Aborted;
                return Err(AgentError::Llm {
                    source,
                    transcript: Box::new(transcript),
                });
            }
        };
        transcript.exchanges.push(Exchange {
            request: messages.clone(),
            response: response.clone(),
        });

        let parsed = parse_step(&response).and_then(|(thought, action)| {
            if registry.get(&action.tool_name).is_some() {
                Ok((thought, action))
            } else {
                Err(ParseError::MalformedAction(format!(
                    "unknown tool '{}'",
                    action.tool_name
                )))
            }
        });

        match parsed {
            Ok((thought, action)) => {
                consecutive_parse_failures = 0;
                transcript.push(StepPayload::Thought { text: thought });

                if action.tool_name == FINAL_ANSWER {
                    transcript.push(StepPayload::FinalAnswer {
                        arguments: action.arguments.clone(),
                    });
                    transcript.outcome = RunOutcome::Success;
                    return Ok((action.arguments, transcript));
                }

                steps_used += 1;
                let tool = registry
                    .get(&action.tool_name)
                    .expect("tool existence checked above");
                transcript.push(StepPayload::ToolCall {
                    tool: action.tool_name.clone(),
                    arguments: action.arguments.clone(),
                });
                let observation = tool.invoke(&action.arguments);
                transcript.push(StepPayload::Observation {
                    text: observation.clone(),
                });
                messages.push(ChatMessage::assistant(response));
                messages.push(ChatMessage::user(format!("Observation:\n{observation}")));
            }
            Err(parse_err) => {
                steps_used += 1;
                consecutive_parse_failures += 1;
                transcript.push(StepPayload::ParseError {
                    detail: parse_err.to_string(),
                });
                if consecutive_parse_failures > limits.max_parse_retries {
                    transcript.outcome = RunOutcome::Aborted;
                    return Err(AgentError::ParseRetriesExhausted {
                        retries: limits.max_parse_retries,
                        transcript: Box::new(transcript),
                    });
                }
                messages.push(ChatMessage::assistant(response));
                messages.push(ChatMessage::user(format!(
                    "Your last reply could not be processed: {parse_err}. Reply again with \
                     `Thought:` followed by an `Action:` JSON object containing the keys \
                     \"action\" and \"action_input\"."
                )));
            }
        }
    }
}
