//! Agentic-RAG topic modeling engine.
//!
//! The pipeline: ingest a CSV corpus, chunk and embed it into an exact
//! cosine-similarity vector store, run ReAct agent rounds that retrieve and
//! extract K topic labels, and score the results with two metrics:
//! weighted reverse-retrieval relevance (validity) and cross-round
//! max-similarity consistency (reliability), alongside a collapsed-Gibbs
//! LDA baseline and bundled reference topic lists.
//!
//! Everything is reproducible offline: a scripted chat backend and a seeded
//! hash embedder stand in for the remote services, and every agent run
//! persists a replayable transcript.

pub mod agent;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod lda;
pub mod llm;
pub mod topicmodel;
pub mod vectorstore;

pub use agent::{AgentLimits, Transcript};
pub use config::RunConfig;
pub use corpus::{Chunk, ChunkPolicy, Document};
pub use embedding::{cosine_similarity, deterministic_embed, EmbedderConfig, EmbeddingVector};
pub use evaluation::{EvalParams, Fixture, ReliabilityReport, ValidityReport};
pub use topicmodel::{RoundResult, Topic, TopicParams};
pub use vectorstore::{IndexedCorpus, SearchHit, VectorStore};
