//! Topic-quality metrics.
//!
//! Validity: embed each topic label, reverse-retrieve the corpus documents
//! most similar to it, and average the topic↔document cosine similarities
//! weighted by each topic's retrieved-document count. Reliability: for two
//! rounds of topics, take the mean over anchor-round topics of the best
//! cosine match in the other round.
//!
//! Both metrics are pure functions of (labels, corpus texts, embedder,
//! params); repeated evaluation gives identical reports.

use crate::embedding::{cosine_similarity, Embedder, EmbeddingError, EmbeddingVector};
use crate::vectorstore::{IndexedCorpus, StoreError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("every topic retrieved zero documents; the similarity floor is too high")]
    AllTopicsEmpty,
    #[error("reliability needs at least 2 rounds, got {0}")]
    TooFewRounds(usize),
    #[error("round '{0}' has no topics")]
    EmptyRound(String),
    #[error("anchor index {index} out of range for {rounds} rounds")]
    BadAnchor { index: usize, rounds: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid fixture file: {0}")]
    InvalidFixture(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A named topic list used for cross-method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub method_name: String,
    pub labels: Vec<String>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let raw = std::fs::read_to_string(path)?;
        let fixture: Fixture =
            serde_json::from_str(&raw).map_err(|e| EvalError::InvalidFixture(e.to_string()))?;
        if fixture.labels.is_empty() {
            return Err(EvalError::InvalidFixture("empty label list".into()));
        }
        Ok(fixture)
    }
}

macro_rules! bundled {
    ($name:literal) => {
        serde_json::from_str::<Fixture>(include_str!(concat!(
            "../assets/fixtures/",
            $name,
            ".json"
        )))
        .expect("bundled fixture parses")
    };
}

/// The five published agentic extraction rounds.
pub fn bundled_rounds() -> Vec<Fixture> {
    vec![
        bundled!("agentic_round_1"),
        bundled!("agentic_round_2"),
        bundled!("agentic_round_3"),
        bundled!("agentic_round_4"),
        bundled!("agentic_round_5"),
    ]
}

/// The three comparison lists: agentic round 1, the LLM-prompting reference
/// list, and the LDA reference list.
pub fn bundled_comparison() -> Vec<Fixture> {
    vec![
        bundled!("agentic_round_1"),
        bundled!("llm_prompting"),
        bundled!("lda_reference"),
    ]
}

fn default_floor() -> f64 {
    0.30
}

fn default_cap() -> usize {
    100
}

/// Reverse-retrieval parameters. The default is threshold retrieval, which
/// keeps per-topic counts variable and the weighting step meaningful; setting
/// `fixed_k` switches to plain top-k retrieval per topic (all weights equal),
/// matching evaluation setups that retrieve a constant document count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_k: Option<usize>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            floor: default_floor(),
            cap: default_cap(),
            fixed_k: None,
        }
    }
}

impl EvalParams {
    fn retrieve(
        &self,
        store: &crate::vectorstore::VectorStore,
        query: &EmbeddingVector,
    ) -> Result<Vec<crate::vectorstore::SearchHit>, StoreError> {
        match self.fixed_k {
            Some(k) => store.search(query, k),
            None => store.search_threshold(query, self.floor, self.cap),
        }
    }
}

/// Embeds bare topic labels with the evaluation embedder.
pub fn embed_topics(
    labels: &[String],
    eval_embedder: &dyn Embedder,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    eval_embedder.embed_batch(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRelevance {
    pub label: String,
    pub retrieved_count: usize,
    pub mean_similarity: f64,
    /// Topics that retrieved nothing carry zero weight in the score.
    pub zero_retrieval: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub method_name: String,
    pub per_topic: Vec<TopicRelevance>,
    /// `sum(count_i * mean_i) / sum(count_i)` over topics with retrievals.
    pub weighted_score: f64,
    /// Standard error across per-topic mean similarities, weighted by the
    /// same retrieval counts as the score. The exact error-bar definition is
    /// an interpretation; the formula here is
    /// `sqrt(sum(w_i (x_i - m)^2) / sum(w_i) / n_topics_with_retrievals)`.
    pub weighted_stderr: f64,
    pub eval_embedder: String,
    pub eval_dim: usize,
    pub retrieval_floor: f64,
    pub retrieval_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_k: Option<usize>,
    /// Which embedding space the reverse retrieval ran in: "eval" (the
    /// default) or "index" (retrieve with the index model, score with the
    /// evaluation model).
    pub retrieval_space: String,
    /// Set when the index was built under a different embedding model and the
    /// corpus was re-embedded with the evaluation embedder.
    pub reembedded_with_eval: bool,
    /// Similarities are computed against retrieval-unit (chunk) embeddings.
    pub similarity_target: String,
}

fn assemble_report(
    method_name: &str,
    per_topic: Vec<TopicRelevance>,
    eval_embedder: &dyn Embedder,
    params: &EvalParams,
    retrieval_space: &str,
    reembedded_with_eval: bool,
) -> Result<ValidityReport, EvalError> {
    let weighted: Vec<&TopicRelevance> = per_topic.iter().filter(|t| !t.zero_retrieval).collect();
    if weighted.is_empty() {
        return Err(EvalError::AllTopicsEmpty);
    }
    let total_weight: f64 = weighted.iter().map(|t| t.retrieved_count as f64).sum();
    let weighted_score: f64 = weighted
        .iter()
        .map(|t| t.retrieved_count as f64 * t.mean_similarity)
        .sum::<f64>()
        / total_weight;
    let weighted_var: f64 = weighted
        .iter()
        .map(|t| {
            let d = t.mean_similarity - weighted_score;
            t.retrieved_count as f64 * d * d
        })
        .sum::<f64>()
        / total_weight;
    let weighted_stderr = (weighted_var / weighted.len() as f64).sqrt();

    Ok(ValidityReport {
        method_name: method_name.to_string(),
        per_topic,
        weighted_score,
        weighted_stderr,
        eval_embedder: eval_embedder.model_name().to_string(),
        eval_dim: eval_embedder.dim(),
        retrieval_floor: params.floor,
        retrieval_cap: params.cap,
        retrieval_k: params.fixed_k,
        retrieval_space: retrieval_space.to_string(),
        reembedded_with_eval,
        similarity_target: "chunks".to_string(),
    })
}

/// Scores one topic list against the corpus.
///
/// Retrieval and scoring both happen in the evaluation embedding space: when
/// the index embedder differs from the evaluation embedder, the corpus chunks
/// are re-embedded with the evaluation model so topic and document vectors
/// share a space, and the report records that this happened.
pub fn validity(
    method_name: &str,
    labels: &[String],
    corpus: &IndexedCorpus,
    eval_embedder: &dyn Embedder,
    params: &EvalParams,
) -> Result<ValidityReport, EvalError> {
    let needs_reembed = corpus.store.model_name() != eval_embedder.model_name()
        || corpus.store.dim() != eval_embedder.dim();
    let eval_corpus_storage;
    let eval_corpus: &IndexedCorpus = if needs_reembed {
        eval_corpus_storage = IndexedCorpus::build(corpus.chunk_texts(), eval_embedder)?;
        &eval_corpus_storage
    } else {
        corpus
    };

    let topic_vectors = embed_topics(labels, eval_embedder)?;
    let mut per_topic = Vec::with_capacity(labels.len());
    for (label, vector) in labels.iter().zip(&topic_vectors) {
        let hits = params.retrieve(&eval_corpus.store, vector)?;
        let count = hits.len();
        let mean = if count == 0 {
            0.0
        } else {
            hits.iter().map(|h| h.score).sum::<f64>() / count as f64
        };
        per_topic.push(TopicRelevance {
            label: label.clone(),
            retrieved_count: count,
            mean_similarity: mean,
            zero_retrieval: count == 0,
        });
    }
    assemble_report(method_name, per_topic, eval_embedder, params, "eval", needs_reembed)
}

/// Scores one topic list with split retrieval and scoring spaces: documents
/// are retrieved from the index as built (queries embedded with the index
/// model), then topic-document similarities are computed in the evaluation
/// space over the retrieved chunk texts. This mirrors pipelines where the
/// knowledge base and the evaluation use different embedding models.
pub fn validity_cross_space(
    method_name: &str,
    labels: &[String],
    corpus: &IndexedCorpus,
    index_embedder: &dyn Embedder,
    eval_embedder: &dyn Embedder,
    params: &EvalParams,
) -> Result<ValidityReport, EvalError> {
    corpus.store.verify_model(index_embedder.model_name())?;
    let query_vectors = index_embedder.embed_batch(labels)?;
    let topic_vectors = embed_topics(labels, eval_embedder)?;

    // Eval-space chunk vectors, embedded lazily per retrieved chunk.
    let mut chunk_eval: std::collections::BTreeMap<String, EmbeddingVector> =
        std::collections::BTreeMap::new();
    let mut per_topic = Vec::with_capacity(labels.len());
    for ((label, query), topic_vector) in labels.iter().zip(&query_vectors).zip(&topic_vectors) {
        let hits = params.retrieve(&corpus.store, query)?;
        let mut missing: Vec<(String, String)> = Vec::new();
        for hit in &hits {
            if !chunk_eval.contains_key(&hit.chunk_id) {
                let text = corpus
                    .text_of(&hit.chunk_id)
                    .ok_or_else(|| {
                        EvalError::InvalidFixture(format!("chunk {} has no text", hit.chunk_id))
                    })?
                    .to_string();
                missing.push((hit.chunk_id.clone(), text));
            }
        }
        if !missing.is_empty() {
            let texts: Vec<String> = missing.iter().map(|(_, t)| t.clone()).collect();
            let vectors = eval_embedder.embed_batch(&texts)?;
            for ((chunk_id, _), vector) in missing.into_iter().zip(vectors) {
                chunk_eval.insert(chunk_id, vector);
            }
        }
        let sims: Vec<f64> = hits
            .iter()
            .map(|hit| cosine_similarity(topic_vector, &chunk_eval[&hit.chunk_id]))
            .collect::<Result<_, _>>()?;
        let count = sims.len();
        let mean = if count == 0 {
            0.0
        } else {
            sims.iter().sum::<f64>() / count as f64
        };
        per_topic.push(TopicRelevance {
            label: label.clone(),
            retrieved_count: count,
            mean_similarity: mean,
            zero_retrieval: count == 0,
        });
    }
    assemble_report(method_name, per_topic, eval_embedder, params, "index", false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    /// Direction is anchor → other; the reverse direction generally differs.
    pub anchor: String,
    pub other: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub rounds: Vec<String>,
    pub anchor: String,
    pub scores_vs_anchor: Vec<PairScore>,
    /// `full_matrix[i][j]` = directed score with round i as anchor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_matrix: Option<Vec<Vec<f64>>>,
    pub eval_embedder: String,
}

/// Directed round-alignment score: mean over anchor topics of the maximum
/// cosine similarity to any topic in `other`.
fn directed_score(anchor: &[EmbeddingVector], other: &[EmbeddingVector]) -> f64 {
    let mut total = 0.0;
    for t in anchor {
        let best = other
            .iter()
            .map(|u| cosine_similarity(t, u).expect("embedded topics are non-zero, same dim"))
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / anchor.len() as f64
}

/// Scores the consistency of topic rounds against an anchor round.
pub fn reliability(
    rounds: &[(String, Vec<String>)],
    eval_embedder: &dyn Embedder,
    anchor_index: usize,
    want_full_matrix: bool,
) -> Result<ReliabilityReport, EvalError> {
    if rounds.len() < 2 {
        return Err(EvalError::TooFewRounds(rounds.len()));
    }
    if anchor_index >= rounds.len() {
        return Err(EvalError::BadAnchor {
            index: anchor_index,
            rounds: rounds.len(),
        });
    }
    for (name, labels) in rounds {
        if labels.is_empty() {
            return Err(EvalError::EmptyRound(name.clone()));
        }
    }

    let embedded: Vec<Vec<EmbeddingVector>> = rounds
        .iter()
        .map(|(_, labels)| embed_topics(labels, eval_embedder))
        .collect::<Result<_, _>>()?;

    let anchor_name = rounds[anchor_index].0.clone();
    let scores_vs_anchor = rounds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor_index)
        .map(|(i, (name, _))| PairScore {
            anchor: anchor_name.clone(),
            other: name.clone(),
            score: directed_score(&embedded[anchor_index], &embedded[i]),
        })
        .collect();

    let full_matrix = want_full_matrix.then(|| {
        embedded
            .iter()
            .map(|a| embedded.iter().map(|b| directed_score(a, b)).collect())
            .collect()
    });

    Ok(ReliabilityReport {
        rounds: rounds.iter().map(|(name, _)| name.clone()).collect(),
        anchor: anchor_name,
        scores_vs_anchor,
        full_matrix,
        eval_embedder: eval_embedder.model_name().to_string(),
    })
}

fn sort_by_score(reports: &mut [ValidityReport]) {
    reports.sort_by(|a, b| {
        b.weighted_score
            .partial_cmp(&a.weighted_score)
            .expect("scores are finite")
            .then_with(|| a.method_name.cmp(&b.method_name))
    });
}

/// Scores every fixture against the same corpus and parameters, sorted by
/// weighted score descending.
pub fn compare_methods(
    fixtures: &[Fixture],
    corpus: &IndexedCorpus,
    eval_embedder: &dyn Embedder,
    params: &EvalParams,
) -> Result<Vec<ValidityReport>, EvalError> {
    assert!(!fixtures.is_empty(), "compare_methods needs fixtures");
    let mut reports = fixtures
        .iter()
        .map(|f| validity(&f.method_name, &f.labels, corpus, eval_embedder, params))
        .collect::<Result<Vec<_>, _>>()?;
    sort_by_score(&mut reports);
    Ok(reports)
}

/// [`compare_methods`] with split retrieval/scoring spaces
/// (see [`validity_cross_space`]).
pub fn compare_methods_cross_space(
    fixtures: &[Fixture],
    corpus: &IndexedCorpus,
    index_embedder: &dyn Embedder,
    eval_embedder: &dyn Embedder,
    params: &EvalParams,
) -> Result<Vec<ValidityReport>, EvalError> {
    assert!(!fixtures.is_empty(), "compare_methods needs fixtures");
    let mut reports = fixtures
        .iter()
        .map(|f| {
            validity_cross_space(
                &f.method_name,
                &f.labels,
                corpus,
                index_embedder,
                eval_embedder,
                params,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_by_score(&mut reports);
    Ok(reports)
}

/// CSV for re-plotting the validity comparison: `method,score,stderr`.
pub fn validity_csv(reports: &[ValidityReport]) -> String {
    let mut out = String::from("method,score,stderr\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{}\n",
            r.method_name, r.weighted_score, r.weighted_stderr
        ));
    }
    out
}

/// CSV for re-plotting the reliability chart: `pair,score`.
pub fn reliability_csv(report: &ReliabilityReport) -> String {
    let mut out = String::from("pair,score\n");
    for p in &report.scores_vs_anchor {
        out.push_str(&format!("{}->{},{}\n", p.anchor, p.other, p.score));
    }
    out
}
