//! Topic-modeling rounds: build the task prompt, run the agent over the
//! indexed corpus, and parse the resulting topic list.

use crate::agent::{self, AgentLimits, PersistedTranscript, ToolRegistry, Transcript, TranscriptEnvelope};
use crate::embedding::Embedder;
use crate::llm::{ChatClient, CompletionParams};
use crate::vectorstore::IndexedCorpus;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Validation failures from [`parse_topics`].
#[derive(Debug, Error)]
pub enum TopicError {
    #[error("expected {expected} topics, got {actual}")]
    WrongTopicCount { expected: usize, actual: usize },
    #[error("topic {position} has an empty label")]
    EmptyLabel { position: usize },
    #[error("duplicate topic label: {0}")]
    DuplicateLabel(String),
}

/// Why a round produced no [`RoundResult`]. The transcripts of every attempt
/// are still recorded in the owning [`RoundRun`].
#[derive(Debug, Error)]
pub enum RoundFailure {
    #[error(transparent)]
    Topics(#[from] TopicError),
    #[error("final answer is missing a string list under 'answer'")]
    MalformedAnswer,
    #[error("agent run failed: {0}")]
    Agent(String),
}

impl RoundFailure {
    /// Topic-shape failures get one full re-run; agent failures propagate.
    fn retryable(&self) -> bool {
        !matches!(self, RoundFailure::Agent(_))
    }
}

/// One extracted topic. Labels are stored bare, without any `Topic N:` prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    /// 1-based position in the round's list.
    pub index: usize,
    pub label: String,
    pub word_count: usize,
    pub violates_word_limit: bool,
}

impl Topic {
    pub fn from_label(index: usize, label: &str, word_limit: usize) -> Self {
        let word_count = label.split_whitespace().count();
        Self {
            index,
            label: label.to_string(),
            word_count,
            violates_word_limit: word_count > word_limit,
        }
    }
}

/// A completed round: exactly `k` topics plus the reference to its transcript
/// and the configuration it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_number: usize,
    pub topics: Vec<Topic>,
    pub transcript_ref: String,
    pub config_snapshot: Value,
}

impl RoundResult {
    pub fn labels(&self) -> Vec<String> {
        self.topics.iter().map(|t| t.label.clone()).collect()
    }
}

fn default_subject() -> String {
    "COVID-19 vaccine hesitancy".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicParams {
    pub k: usize,
    pub word_limit: usize,
    #[serde(default = "default_subject")]
    pub subject: String,
    pub rounds: usize,
}

impl Default for TopicParams {
    fn default() -> Self {
        Self {
            k: 10,
            word_limit: 3,
            subject: default_subject(),
            rounds: 5,
        }
    }
}

/// Builds the per-round task prompt handed to the agent.
pub fn build_task_prompt(subject: &str, k: usize, word_limit: usize) -> String {
    assert!(k >= 1, "k must be at least 1");
    assert!(word_limit >= 1, "word_limit must be at least 1");
    format!(
        "Identify the {k} most relevant topics related to {subject} in the indexed document \
         collection. Use the retriever tool with multiple queries and diverse phrasings so the \
         search covers the data comprehensively. Each topic must be no more than {word_limit} \
         word{} long. When you are confident, call final_answer with an \"answer\" list of \
         exactly {k} entries of the form \"Topic i: <label>\".",
        if word_limit == 1 { "" } else { "s" }
    )
}

/// Strips an optional `Topic <n>:` prefix and surrounding whitespace.
fn strip_prefix(entry: &str) -> &str {
    let trimmed = entry.trim();
    let lower = trimmed.to_lowercase();
    if let Some(rest) = lower.strip_prefix("topic") {
        let digits = rest.trim_start();
        let digit_count = digits.chars().take_while(|c| c.is_ascii_digit()).count();
        if digit_count > 0 {
            let after = digits[digit_count..].trim_start();
            if let Some(stripped) = after.strip_prefix(':') {
                // Map the residue length back into the original string.
                let consumed = trimmed.len() - stripped.len();
                return trimmed[consumed..].trim();
            }
        }
    }
    trimmed
}

/// Parses and validates the agent's answer list. Word-limit violations are
/// flagged, not fatal; count mismatches, empty labels, and case-insensitive
/// duplicates reject the round.
pub fn parse_topics(
    answer: &[String],
    k: usize,
    word_limit: usize,
) -> Result<Vec<Topic>, TopicError> {
    if answer.len() != k {
        return Err(TopicError::WrongTopicCount {
            expected: k,
            actual: answer.len(),
        });
    }
    let mut topics = Vec::with_capacity(k);
    let mut seen = std::collections::HashSet::new();
    for (i, entry) in answer.iter().enumerate() {
        let label = strip_prefix(entry);
        if label.is_empty() {
            return Err(TopicError::EmptyLabel { position: i + 1 });
        }
        if !seen.insert(label.to_lowercase()) {
            return Err(TopicError::DuplicateLabel(label.to_string()));
        }
        topics.push(Topic::from_label(i + 1, label, word_limit));
    }
    Ok(topics)
}

fn answer_labels(arguments: &serde_json::Map<String, Value>) -> Result<Vec<String>, RoundFailure> {
    let list = arguments
        .get("answer")
        .and_then(Value::as_array)
        .ok_or(RoundFailure::MalformedAnswer)?;
    list.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or(RoundFailure::MalformedAnswer)
        })
        .collect()
}

/// Everything a round needs, bundled so repeated rounds share one setup.
pub struct RoundContext {
    pub corpus: Arc<IndexedCorpus>,
    pub embedder: Arc<dyn Embedder>,
    pub llm_params: CompletionParams,
    pub topic_params: TopicParams,
    pub agent_limits: AgentLimits,
    pub retriever_k: usize,
    pub config_snapshot: Value,
    pub config_hash: String,
}

impl RoundContext {
    fn registry(&self) -> ToolRegistry {
        let mut registry = ToolRegistry::new();
        registry.register(agent::retriever_tool(
            Arc::clone(&self.corpus),
            Arc::clone(&self.embedder),
            self.retriever_k,
        ));
        registry
    }
}

/// The full record of one round: every attempt's transcript plus the outcome.
pub struct RoundRun {
    pub round_number: usize,
    pub transcripts: Vec<PersistedTranscript>,
    pub result: Result<RoundResult, RoundFailure>,
}

fn now_unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn attempt_round(
    ctx: &RoundContext,
    client: &dyn ChatClient,
    round_number: usize,
    attempt: u32,
) -> (PersistedTranscript, Result<Vec<Topic>, RoundFailure>) {
    let task = build_task_prompt(
        &ctx.topic_params.subject,
        ctx.topic_params.k,
        ctx.topic_params.word_limit,
    );
    let registry = ctx.registry();
    let started = now_unix_ms();

    let (transcript, outcome): (Transcript, Result<Vec<Topic>, RoundFailure>) = match agent::run(
        &task,
        &registry,
        client,
        &ctx.llm_params,
        &ctx.agent_limits,
        ctx.config_snapshot.clone(),
    ) {
        Ok((arguments, transcript)) => {
            let topics = answer_labels(&arguments).and_then(|labels| {
                parse_topics(&labels, ctx.topic_params.k, ctx.topic_params.word_limit)
                    .map_err(RoundFailure::from)
            });
            (transcript, topics)
        }
        Err(err) => {
            let message = err.to_string();
            (err.into_transcript(), Err(RoundFailure::Agent(message)))
        }
    };

    let persisted = PersistedTranscript {
        envelope: TranscriptEnvelope {
            run_id: format!("round-{round_number:02}-a{attempt}"),
            started_unix_ms: started,
            finished_unix_ms: now_unix_ms(),
            config_hash: ctx.config_hash.clone(),
            attempt,
        },
        transcript,
    };
    (persisted, outcome)
}

/// Runs one round: prompt, agent loop, topic parsing. A topic-shape failure
/// triggers exactly one full re-run before the round fails.
pub fn run_round(ctx: &RoundContext, client: &dyn ChatClient, round_number: usize) -> RoundRun {
    let mut transcripts = Vec::new();
    for attempt in 1..=2u32 {
        let (persisted, outcome) = attempt_round(ctx, client, round_number, attempt);
        let run_id = persisted.envelope.run_id.clone();
        transcripts.push(persisted);
        match outcome {
            Ok(topics) => {
                return RoundRun {
                    round_number,
                    transcripts,
                    result: Ok(RoundResult {
                        round_number,
                        topics,
                        transcript_ref: run_id,
                        config_snapshot: ctx.config_snapshot.clone(),
                    }),
                };
            }
            Err(failure) => {
                if attempt == 2 || !failure.retryable() {
                    return RoundRun {
                        round_number,
                        transcripts,
                        result: Err(failure),
                    };
                }
            }
        }
    }
    unreachable!("loop returns within two attempts")
}

/// Runs `n` independent rounds with a fresh client per round. Per-round
/// failures are collected rather than aborting the batch; when `artifact_dir`
/// is given, transcripts land in `transcripts/` and results in `rounds/`.
pub fn run_rounds(
    ctx: &RoundContext,
    mut make_client: impl FnMut() -> Box<dyn ChatClient>,
    n: usize,
    artifact_dir: Option<&Path>,
) -> std::io::Result<Vec<RoundRun>> {
    assert!(n >= 1, "at least one round required");
    let mut runs = Vec::with_capacity(n);
    for round_number in 1..=n {
        let client = make_client();
        let run = run_round(ctx, client.as_ref(), round_number);
        if let Some(dir) = artifact_dir {
            persist_round(dir, &run)?;
        }
        runs.push(run);
    }
    Ok(runs)
}

fn persist_round(dir: &Path, run: &RoundRun) -> std::io::Result<()> {
    let transcripts_dir = dir.join("transcripts");
    let rounds_dir = dir.join("rounds");
    std::fs::create_dir_all(&transcripts_dir)?;
    std::fs::create_dir_all(&rounds_dir)?;
    for persisted in &run.transcripts {
        persisted.save(&transcripts_dir.join(format!("{}.json", persisted.envelope.run_id)))?;
    }
    match &run.result {
        Ok(result) => {
            let data = serde_json::to_vec_pretty(result).expect("round result serializes");
            std::fs::write(
                rounds_dir.join(format!("round-{:02}.json", run.round_number)),
                data,
            )?;
        }
        Err(failure) => {
            let marker = serde_json::json!({
                "round_number": run.round_number,
                "failed": true,
                "error": failure.to_string(),
            });
            std::fs::write(
                rounds_dir.join(format!("round-{:02}.failed.json", run.round_number)),
                serde_json::to_vec_pretty(&marker).expect("marker serializes"),
            )?;
        }
    }
    Ok(())
}
