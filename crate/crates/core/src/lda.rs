//! A minimal LDA topic model: preprocessing plus a collapsed Gibbs sampler.
//!
//! This is the traditional baseline the engine scores next to the agentic
//! results. It is deliberately small and deterministic: a fixed stoplist, a
//! fixed suffix-stripping stemmer, and a single seeded sampling stream in
//! fixed token order, so identical inputs always give identical models.

use crate::topicmodel::Topic;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const STOPWORDS: &str = include_str!("../assets/stopwords_en.txt");
pub const STOPLIST_ID: &str = "en-base-v1";
pub const STEMMER_ID: &str = "suffix-v1";

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("preprocessing left an empty vocabulary")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub stem: bool,
    pub min_token_len: usize,
    pub min_doc_freq: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            stem: true,
            min_token_len: 2,
            min_doc_freq: 2,
        }
    }
}

/// Bag-of-words corpus after cleaning: an indexed vocabulary and per-document
/// word-index sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizedCorpus {
    pub vocab: Vec<String>,
    pub docs: Vec<Vec<usize>>,
    pub stoplist_id: String,
    pub stemmer_id: String,
}

/// Suffix-stripping rules applied in order, first match wins. A rule fires
/// only when at least three characters remain after stripping.
///
/// | suffix | replacement |
/// |--------|-------------|
/// | ies    | y           |
/// | sses   | ss          |
/// | ness   |             |
/// | ment   |             |
/// | ing    |             |
/// | est    |             |
/// | ed     |             |
/// | er     |             |
/// | ly     |             |
/// | s      |             | (not after ss/us/is)
const STEM_RULES: [(&str, &str); 9] = [
    ("ies", "y"),
    ("sses", "ss"),
    ("ness", ""),
    ("ment", ""),
    ("ing", ""),
    ("est", ""),
    ("ed", ""),
    ("er", ""),
    ("ly", ""),
];

pub fn stem(word: &str) -> String {
    for (suffix, replacement) in STEM_RULES {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return format!("{base}{replacement}");
            }
        }
    }
    if let Some(base) = word.strip_suffix('s') {
        let keep = word.ends_with("ss") || word.ends_with("us") || word.ends_with("is");
        if !keep && base.chars().count() >= 3 {
            return base.to_string();
        }
    }
    word.to_string()
}

fn clean_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .filter(|t| {
            !(t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www."))
        })
        .filter(|t| !t.starts_with('@'))
        .flat_map(|t| {
            t.chars()
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect::<String>()
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Lowercase, strip URLs/mentions/punctuation, tokenize, drop stopwords and
/// short tokens, optionally stem, then drop rare terms.
pub fn preprocess(
    texts: &[String],
    options: &PreprocessOptions,
) -> Result<TokenizedCorpus, LdaError> {
    assert!(!texts.is_empty(), "preprocess requires at least one text");
    let stopwords: BTreeSet<&str> = STOPWORDS.lines().filter(|l| !l.is_empty()).collect();

    let tokenized: Vec<Vec<String>> = texts
        .iter()
        .map(|text| {
            clean_tokens(text)
                .into_iter()
                .filter(|t| !stopwords.contains(t.as_str()))
                .filter(|t| t.chars().count() >= options.min_token_len)
                .map(|t| if options.stem { stem(&t) } else { t })
                .collect()
        })
        .collect();

    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &tokenized {
        for token in doc.iter().collect::<BTreeSet<_>>() {
            *doc_freq.entry(token.clone()).or_insert(0) += 1;
        }
    }
    let vocab: Vec<String> = doc_freq
        .iter()
        .filter(|(_, freq)| **freq >= options.min_doc_freq)
        .map(|(token, _)| token.clone())
        .collect();
    if vocab.is_empty() {
        return Err(LdaError::EmptyVocabulary);
    }
    let index: BTreeMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let docs: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|doc| {
            doc.iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect()
        })
        .collect();

    Ok(TokenizedCorpus {
        vocab,
        docs,
        stoplist_id: STOPLIST_ID.to_string(),
        stemmer_id: if options.stem { STEMMER_ID } else { "none" }.to_string(),
    })
}

/// A fitted model: the count tables and assignments of collapsed Gibbs LDA.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    pub topic_word_counts: Vec<Vec<u32>>,
    pub doc_topic_counts: Vec<Vec<u32>>,
    pub topic_totals: Vec<u32>,
    pub assignments: Vec<Vec<usize>>,
    pub seed: u64,
    pub iterations: usize,
}

impl LdaModel {
    /// Checks the marginal-consistency equations over the count tables.
    pub fn counts_consistent(&self, corpus: &TokenizedCorpus) -> bool {
        for (k, row) in self.topic_word_counts.iter().enumerate() {
            if row.iter().sum::<u32>() != self.topic_totals[k] {
                return false;
            }
        }
        for (d, row) in self.doc_topic_counts.iter().enumerate() {
            if row.iter().sum::<u32>() as usize != corpus.docs[d].len() {
                return false;
            }
        }
        // Rebuild the tables from the assignments and compare.
        let v = self.vocab.len();
        let mut tw = vec![vec![0u32; v]; self.k];
        let mut dt = vec![vec![0u32; self.k]; corpus.docs.len()];
        for (d, doc) in corpus.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let z = self.assignments[d][i];
                tw[z][w] += 1;
                dt[d][z] += 1;
            }
        }
        tw == self.topic_word_counts && dt == self.doc_topic_counts
    }

    /// Smoothed topic-word distribution for one topic; sums to 1.
    pub fn topic_distribution(&self, topic: usize) -> Vec<f64> {
        let v = self.vocab.len() as f64;
        let total = self.topic_totals[topic] as f64 + v * self.beta;
        self.topic_word_counts[topic]
            .iter()
            .map(|c| (*c as f64 + self.beta) / total)
            .collect()
    }
}

/// Collapsed Gibbs sampler state. Tests drive [`GibbsSampler::sweep`] directly
/// to check count conservation after every pass.
pub struct GibbsSampler<'a> {
    corpus: &'a TokenizedCorpus,
    model: LdaModel,
    rng: ChaCha8Rng,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(corpus: &'a TokenizedCorpus, k: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        assert!(k >= 1, "at least one topic");
        assert!(alpha > 0.0 && beta > 0.0, "hyperparameters must be positive");
        let v = corpus.vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = LdaModel {
            k,
            alpha,
            beta,
            vocab: corpus.vocab.clone(),
            topic_word_counts: vec![vec![0; v]; k],
            doc_topic_counts: vec![vec![0; k]; corpus.docs.len()],
            topic_totals: vec![0; k],
            assignments: corpus.docs.iter().map(|d| vec![0; d.len()]).collect(),
            seed,
            iterations: 0,
        };
        for (d, doc) in corpus.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let z = rng.random_range(0..k);
                model.assignments[d][i] = z;
                model.topic_word_counts[z][w] += 1;
                model.doc_topic_counts[d][z] += 1;
                model.topic_totals[z] += 1;
            }
        }
        Self { corpus, model, rng }
    }

    /// One full pass over every token in fixed order, resampling each
    /// assignment from `P(z=k | rest) ∝ (n_dk + α)(n_kw + β)/(n_k + Vβ)`.
    pub fn sweep(&mut self) {
        let v_beta = self.corpus.vocab.len() as f64 * self.model.beta;
        let k = self.model.k;
        let mut weights = vec![0.0f64; k];
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.model.assignments[d][i];
                self.model.topic_word_counts[old][w] -= 1;
                self.model.doc_topic_counts[d][old] -= 1;
                self.model.topic_totals[old] -= 1;

                let mut total = 0.0;
                for (z, weight) in weights.iter_mut().enumerate() {
                    let doc_part = self.model.doc_topic_counts[d][z] as f64 + self.model.alpha;
                    let word_part = (self.model.topic_word_counts[z][w] as f64 + self.model.beta)
                        / (self.model.topic_totals[z] as f64 + v_beta);
                    *weight = doc_part * word_part;
                    total += *weight;
                }
                let mut u = self.rng.random_range(0.0..total);
                let mut new = k - 1;
                for (z, weight) in weights.iter().enumerate() {
                    if u < *weight {
                        new = z;
                        break;
                    }
                    u -= weight;
                }

                self.model.assignments[d][i] = new;
                self.model.topic_word_counts[new][w] += 1;
                self.model.doc_topic_counts[d][new] += 1;
                self.model.topic_totals[new] += 1;
            }
        }
        self.model.iterations += 1;
    }

    pub fn model(&self) -> &LdaModel {
        &self.model
    }

    pub fn into_model(self) -> LdaModel {
        self.model
    }
}

/// Fits a model with `iterations` full Gibbs sweeps.
pub fn fit_gibbs(
    corpus: &TokenizedCorpus,
    k: usize,
    alpha: f64,
    beta: f64,
    iterations: usize,
    seed: u64,
) -> LdaModel {
    assert!(iterations >= 1, "at least one iteration");
    let mut sampler = GibbsSampler::new(corpus, k, alpha, beta, seed);
    for _ in 0..iterations {
        sampler.sweep();
    }
    sampler.into_model()
}

/// Top `n` words of a topic by smoothed probability, ties alphabetical.
pub fn top_words(model: &LdaModel, topic: usize, n: usize) -> Vec<String> {
    assert!(topic < model.k, "topic id out of range");
    let mut indexed: Vec<(usize, u32)> = model.topic_word_counts[topic]
        .iter()
        .copied()
        .enumerate()
        .collect();
    // Smoothing adds the same beta everywhere, so counts order identically.
    indexed.sort_by(|a, b| b.1.cmp(&a.1).then(model.vocab[a.0].cmp(&model.vocab[b.0])));
    indexed
        .into_iter()
        .take(n)
        .map(|(w, _)| model.vocab[w].clone())
        .collect()
}

const LABEL_WORD_LIMIT: usize = 3;

/// Joins each topic's top `n` words into a label so LDA output can be scored
/// by the validity metric.
pub fn topic_labels(model: &LdaModel, n: usize) -> Vec<Topic> {
    (0..model.k)
        .map(|k| {
            let label = top_words(model, k, n).join(" ");
            Topic::from_label(k + 1, &label, LABEL_WORD_LIMIT)
        })
        .collect()
}
