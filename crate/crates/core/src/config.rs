//! Run configuration: one structured file, flag overrides at the CLI layer,
//! and a semantic snapshot hash stamped into every artifact.
//!
//! The hash covers only behavior-relevant fields. File paths, URLs, and
//! credential variable names are excluded so the same logical run produces
//! the same run id regardless of where its inputs live.

use crate::agent::AgentLimits;
use crate::corpus::ChunkPolicy;
use crate::embedding::{EmbedderBackend, EmbedderConfig, RetryPolicy};
use crate::evaluation::EvalParams;
use crate::llm::CompletionParams;
use crate::topicmodel::TopicParams;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub fn default_true() -> bool {
    true
}

fn default_text_column() -> String {
    "text".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    /// Duplicate tweets are kept by default: retrieval frequency is signal.
    #[serde(default)]
    pub dedup: bool,
    #[serde(default)]
    pub skip_malformed: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            csv_path: None,
            text_column: default_text_column(),
            dedup: false,
            skip_malformed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum LlmBackendConfig {
    RemoteHttp {
        base_url: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
    Scripted { script_path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    #[serde(flatten)]
    pub backend: LlmBackendConfig,
    #[serde(flatten)]
    pub params: CompletionParams,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: LlmBackendConfig::RemoteHttp {
                base_url: "https://api.openai.com/v1".to_string(),
                api_key_env: Some("OPENAI_API_KEY".to_string()),
            },
            params: CompletionParams::default(),
            retry: RetryPolicy::default(),
        }
    }
}

fn default_retriever_k() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(flatten)]
    pub limits: AgentLimits,
    #[serde(default = "default_retriever_k")]
    pub retriever_k: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            limits: AgentLimits::default(),
            retriever_k: default_retriever_k(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Defaults to 50/K when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub stem: bool,
    pub min_token_len: usize,
    pub min_doc_freq: usize,
    /// Words joined into each topic label.
    pub label_words: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: None,
            beta: 0.01,
            iterations: 500,
            stem: true,
            min_token_len: 2,
            min_doc_freq: 2,
            label_words: 2,
        }
    }
}

impl LdaConfig {
    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub chunking: ChunkPolicy,
    pub index_embedder: EmbedderConfig,
    pub eval_embedder: EmbedderConfig,
    pub llm: LlmConfig,
    pub agent: AgentConfig,
    pub topics: TopicParams,
    pub eval: EvalParams,
    pub lda: LdaConfig,
    pub seed: u64,
    pub artifact_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            chunking: ChunkPolicy::default(),
            index_embedder: EmbedderConfig::deterministic("hash-ngram-v1", 384, 42),
            eval_embedder: EmbedderConfig::deterministic("hash-ngram-v1", 384, 42),
            llm: LlmConfig::default(),
            agent: AgentConfig::default(),
            topics: TopicParams::default(),
            eval: EvalParams::default(),
            lda: LdaConfig::default(),
            seed: 42,
            artifact_dir: PathBuf::from("artifacts"),
        }
    }
}

fn embedder_snapshot(config: &EmbedderConfig) -> Value {
    let (kind, seed) = match &config.backend {
        EmbedderBackend::RemoteHttp { .. } => ("remote_http", None),
        EmbedderBackend::DeterministicTest { seed } => ("deterministic_test", Some(*seed)),
    };
    json!({
        "backend": kind,
        "seed": seed,
        "model_name": config.model_name,
        "dim": config.dim,
        "normalize": config.normalize,
        "batch_size": config.batch_size,
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("config serializes"))
    }

    /// The behavior-relevant subset of the configuration: everything that
    /// changes results, nothing that merely locates them.
    pub fn snapshot(&self) -> Value {
        let llm_backend = match &self.llm.backend {
            LlmBackendConfig::RemoteHttp { .. } => "remote_http",
            LlmBackendConfig::Scripted { .. } => "scripted",
        };
        json!({
            "corpus": {
                "text_column": self.corpus.text_column,
                "dedup": self.corpus.dedup,
                "skip_malformed": self.corpus.skip_malformed,
            },
            "chunking": self.chunking,
            "index_embedder": embedder_snapshot(&self.index_embedder),
            "eval_embedder": embedder_snapshot(&self.eval_embedder),
            "llm": {
                "backend": llm_backend,
                "model_name": self.llm.params.model_name,
                "temperature": self.llm.params.temperature,
                "max_output_chars": self.llm.params.max_output_chars,
                "seed": self.llm.params.seed,
            },
            "agent": {
                "max_steps": self.agent.limits.max_steps,
                "max_parse_retries": self.agent.limits.max_parse_retries,
                "retriever_k": self.agent.retriever_k,
            },
            "topics": self.topics,
            "eval": self.eval,
            "lda": self.lda,
            "seed": self.seed,
        })
    }

    /// SHA-256 over the canonical snapshot serialization.
    pub fn hash(&self) -> String {
        let serialized = serde_json::to_string(&self.snapshot()).expect("snapshot serializes");
        let digest = Sha256::digest(serialized.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
