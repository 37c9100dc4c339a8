//! Text embedding backends and the vector math shared by indexing and evaluation.
//!
//! Two backends are provided: a remote HTTP client speaking the de-facto
//! embeddings endpoint (`POST {model, input} -> {data: [{index, embedding}]}`),
//! and a seeded character-n-gram embedder for fully reproducible, offline runs.

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

/// Unit tolerance used when a backend declares normalized output.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("text at position {index} is empty")]
    EmptyText { index: usize },
    #[error("embedding backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("embedding backend returned a malformed response: {0}")]
    MalformedResponse(String),
    #[error("vector contains a non-finite component at index {0}")]
    NonFinite(usize),
}

/// A fixed-dimension semantic vector. Components are kept as `f64` in memory;
/// persistence quantizes to little-endian `f32` (see the vector store format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    /// Builds a vector, rejecting NaN/Inf components.
    pub fn new(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn l2_norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }

    /// Returns a unit-norm copy, or `ZeroVector` if the norm vanishes.
    pub fn normalized(&self) -> Result<Self, EmbeddingError> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        Ok(Self {
            components: self.components.iter().map(|c| c / norm).collect(),
        })
    }

    /// Rounds every component to `f32` precision. The vector store applies this
    /// at build time so that persisted indexes answer searches identically.
    pub fn quantized_f32(&self) -> Self {
        Self {
            components: self.components.iter().map(|c| *c as f32 as f64).collect(),
        }
    }
}

/// Cosine similarity `<a,b> / (|a||b|)`, symmetric in its arguments.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.is_zero() || b.is_zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = a
        .components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| x * y)
        .sum();
    let sim = dot / (a.l2_norm() * b.l2_norm());
    Ok(sim.clamp(-1.0, 1.0))
}

/// Which service produces the vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum EmbedderBackend {
    /// De-facto embeddings endpoint; credential read from `api_key_env` when set.
    RemoteHttp {
        base_url: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
    /// Seeded n-gram hash embedder for offline, reproducible runs.
    DeterministicTest { seed: u64 },
}

fn default_batch_size() -> usize {
    32
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    #[serde(flatten)]
    pub backend: EmbedderBackend,
    pub model_name: String,
    pub dim: usize,
    #[serde(default = "crate::config::default_true")]
    pub normalize: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Concurrent sub-batches for the remote backend; results are reassembled
    /// in input order.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl EmbedderConfig {
    /// Offline embedder used throughout the test suite and in dry runs.
    pub fn deterministic(model_name: &str, dim: usize, seed: u64) -> Self {
        Self {
            backend: EmbedderBackend::DeterministicTest { seed },
            model_name: model_name.to_string(),
            dim,
            normalize: true,
            batch_size: default_batch_size(),
            parallelism: 1,
            retry: RetryPolicy::default(),
        }
    }

    pub fn remote(base_url: &str, model_name: &str, dim: usize) -> Self {
        Self {
            backend: EmbedderBackend::RemoteHttp {
                base_url: base_url.to_string(),
                api_key_env: None,
            },
            model_name: model_name.to_string(),
            dim,
            normalize: true,
            batch_size: default_batch_size(),
            parallelism: 1,
            retry: RetryPolicy::default(),
        }
    }
}

fn default_request_timeout_ms() -> u64 {
    120_000
}

/// Transport retry settings shared by the HTTP backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
    /// Per-request deadline; a stalled response fails the attempt rather
    /// than hanging the run.
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
            request_timeout_ms: default_request_timeout_ms(),
        }
    }
}

impl RetryPolicy {
    /// An HTTP agent with this policy's per-request deadline applied.
    pub fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.request_timeout_ms.max(1))))
            .build()
            .into()
    }
}

impl RetryPolicy {
    /// Runs `op` up to `attempts` times with exponential backoff, returning the
    /// last error message on exhaustion.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, String>,
    ) -> Result<T, (u32, String)> {
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
            if attempt + 1 < attempts {
                let delay = self.base_delay_ms.saturating_mul(1 << attempt);
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err((attempts, last))
    }
}

/// Something that can turn batches of texts into vectors.
pub trait Embedder: Send + Sync {
    fn model_name(&self) -> &str;
    fn dim(&self) -> usize;
    fn normalizes(&self) -> bool;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut out = self.embed_batch(std::slice::from_ref(&text.to_string()))?;
        out.pop().ok_or_else(|| {
            EmbeddingError::MalformedResponse("backend returned no vector".into())
        })
    }
}

/// Instantiates the backend described by `config`.
pub fn build_embedder(config: &EmbedderConfig) -> Box<dyn Embedder> {
    match &config.backend {
        EmbedderBackend::DeterministicTest { seed } => {
            Box::new(DeterministicEmbedder::new(config.clone(), *seed))
        }
        EmbedderBackend::RemoteHttp {
            base_url,
            api_key_env,
        } => Box::new(HttpEmbedder::new(
            config.clone(),
            base_url.clone(),
            api_key_env.clone(),
        )),
    }
}

/// Convenience wrapper matching the operation-level contract: output length
/// equals input length, order-aligned, dims validated, unit-norm when asked.
pub fn embed_batch(
    texts: &[String],
    config: &EmbedderConfig,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    build_embedder(config).embed_batch(texts)
}

fn check_inputs(texts: &[String]) -> Result<(), EmbeddingError> {
    for (index, text) in texts.iter().enumerate() {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText { index });
        }
    }
    Ok(())
}

fn postprocess(
    vectors: Vec<EmbeddingVector>,
    expected_len: usize,
    dim: usize,
    normalize: bool,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if vectors.len() != expected_len {
        return Err(EmbeddingError::MalformedResponse(format!(
            "expected {} vectors, got {}",
            expected_len,
            vectors.len()
        )));
    }
    vectors
        .into_iter()
        .map(|v| {
            if v.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if normalize {
                v.normalized()
            } else {
                Ok(v)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Deterministic test embedder
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Embeds a text by hashing its lowercased character trigrams into `dim`
/// signed-count buckets with a seeded hash, then L2-normalizing. Identical
/// `(text, dim, seed)` always give identical output, and texts sharing more
/// trigrams land closer in cosine space than disjoint ones.
pub fn deterministic_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= 8, "deterministic embedder needs dim >= 8");
    let lowered: Vec<char> = text.to_lowercase().chars().collect();
    let mut accum = vec![0.0_f64; dim];

    let mut add_gram = |gram: &str| {
        let h = fnv1a64(seed, gram.as_bytes());
        let bucket = ((h >> 1) % dim as u64) as usize;
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        accum[bucket] += sign;
    };

    if lowered.len() < 3 {
        if !lowered.is_empty() {
            add_gram(&lowered.iter().collect::<String>());
        }
    } else {
        for window in lowered.windows(3) {
            add_gram(&window.iter().collect::<String>());
        }
    }

    // Signed counts can cancel to zero; fall back to a single indicator bucket
    // so that normalization is always defined.
    if accum.iter().all(|c| *c == 0.0) {
        let h = fnv1a64(seed.wrapping_add(1), text.as_bytes());
        accum[(h % dim as u64) as usize] = 1.0;
    }

    let v = EmbeddingVector { components: accum };
    v.normalized().expect("fallback bucket guarantees non-zero")
}

struct DeterministicEmbedder {
    config: EmbedderConfig,
    seed: u64,
}

impl DeterministicEmbedder {
    fn new(config: EmbedderConfig, seed: u64) -> Self {
        Self { config, seed }
    }
}

impl Embedder for DeterministicEmbedder {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn normalizes(&self) -> bool {
        self.config.normalize
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        check_inputs(texts)?;
        let vectors: Vec<EmbeddingVector> = texts
            .iter()
            .map(|t| deterministic_embed(t, self.config.dim, self.seed))
            .collect();
        postprocess(vectors, texts.len(), self.config.dim, self.config.normalize)
    }
}

// ---------------------------------------------------------------------------
// Remote HTTP embedder
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f64>,
}

struct HttpEmbedder {
    config: EmbedderConfig,
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    fn new(config: EmbedderConfig, base_url: String, api_key_env: Option<String>) -> Self {
        let endpoint = format!("{}/embeddings", base_url.trim_end_matches('/'));
        let api_key = api_key_env.and_then(|var| std::env::var(var).ok());
        let agent = config.retry.agent();
        Self {
            config,
            endpoint,
            api_key,
            agent,
        }
    }

    fn fetch_sub_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let body = serde_json::to_value(EmbedRequest {
            model: &self.config.model_name,
            input: texts,
        })
        .expect("request serialization cannot fail");

        let response: EmbedResponse = self
            .config
            .retry
            .run(|| {
                let mut req = self.agent.post(&self.endpoint);
                if let Some(key) = &self.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.send_json(&body)
                    .map_err(|e| e.to_string())?
                    .body_mut()
                    .read_json::<EmbedResponse>()
                    .map_err(|e| format!("invalid response body: {e}"))
            })
            .map_err(|(attempts, reason)| EmbeddingError::BackendUnavailable {
                attempts,
                reason,
            })?;

        if response.data.len() != texts.len() {
            return Err(EmbeddingError::MalformedResponse(format!(
                "requested {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut items = response.data;
        items.sort_by_key(|item| item.index);
        items
            .into_iter()
            .map(|item| EmbeddingVector::new(item.embedding))
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn normalizes(&self) -> bool {
        self.config.normalize
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        check_inputs(texts)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batch_size = self.config.batch_size.max(1);
        let sub_batches: Vec<&[String]> = texts.chunks(batch_size).collect();

        let bound = self.config.parallelism.max(1);
        let mut results: Vec<Option<Result<Vec<EmbeddingVector>, EmbeddingError>>> =
            (0..sub_batches.len()).map(|_| None).collect();
        let batches = &sub_batches;
        let mut next = 0;
        while next < sub_batches.len() {
            let end = (next + bound).min(sub_batches.len());
            std::thread::scope(|scope| {
                let handles: Vec<_> = (next..end)
                    .map(|i| scope.spawn(move || self.fetch_sub_batch(batches[i])))
                    .collect();
                for (slot, handle) in (next..end).zip(handles) {
                    results[slot] = Some(handle.join().unwrap_or_else(|_| {
                        Err(EmbeddingError::MalformedResponse(
                            "embedding worker panicked".into(),
                        ))
                    }));
                }
            });
            next = end;
        }

        let mut vectors = Vec::with_capacity(texts.len());
        for result in results {
            vectors.extend(result.expect("all slots filled")?);
        }
        postprocess(vectors, texts.len(), self.config.dim, self.config.normalize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecf(components: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(components.to_vec()).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.7071067812 is the pinned expected value
    fn cosine_identity_orthogonality_and_known_value() {
        let a = vecf(&[1.0, 0.0, 0.0]);
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);

        let x = vecf(&[1.0, 0.0]);
        let y = vecf(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);

        let d = vecf(&[1.0, 1.0]);
        let sim = cosine_similarity(&x, &d).unwrap();
        assert!((sim - 0.7071067812).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatched_vectors() {
        let a = vecf(&[1.0, 0.0]);
        let z = vecf(&[0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &z),
            Err(EmbeddingError::ZeroVector)
        ));
        let b = vecf(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_is_computed_symmetrically() {
        let a = vecf(&[0.3, -0.2, 0.9, 0.17]);
        let b = vecf(&[-0.5, 0.41, 0.13, 0.88]);
        assert_eq!(
            cosine_similarity(&a, &b).unwrap(),
            cosine_similarity(&b, &a).unwrap()
        );
    }

    #[test]
    fn deterministic_embed_is_repeatable() {
        let a = deterministic_embed("vaccine safety", 64, 7);
        let b = deterministic_embed("vaccine safety", 64, 7);
        assert_eq!(a, b);
        assert!((a.l2_norm() - 1.0).abs() < NORM_TOLERANCE);
    }

    #[test]
    fn shared_ngrams_score_higher_than_disjoint_text() {
        let dim = 64;
        let base = deterministic_embed("vaccine safety", dim, 7);
        let near = deterministic_embed("vaccine safety risks", dim, 7);
        let far = deterministic_embed("quarterly earnings call", dim, 7);
        let sim_near = cosine_similarity(&base, &near).unwrap();
        let sim_far = cosine_similarity(&base, &far).unwrap();
        assert!(
            sim_near > sim_far,
            "expected {sim_near} > {sim_far} for overlapping trigrams"
        );
    }

    #[test]
    fn short_texts_still_embed() {
        let v = deterministic_embed("ab", 8, 3);
        assert!((v.l2_norm() - 1.0).abs() < NORM_TOLERANCE);
    }

    #[test]
    fn embed_batch_deterministic_backend_contract() {
        let config = EmbedderConfig::deterministic("det-test", 32, 11);
        let out = embed_batch(&["abc".into(), "abc".into()], &config).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], out[1]);
        for v in &out {
            assert_eq!(v.dim(), 32);
            assert!((v.l2_norm() - 1.0).abs() < NORM_TOLERANCE);
        }
    }

    #[test]
    fn embed_batch_empty_input_and_empty_text() {
        let config = EmbedderConfig::deterministic("det-test", 32, 11);
        assert!(embed_batch(&[], &config).unwrap().is_empty());
        let err = embed_batch(&["ok".into(), "   ".into()], &config).unwrap_err();
        assert!(matches!(err, EmbeddingError::EmptyText { index: 1 }));
    }

    #[test]
    fn batch_split_equals_whole_batch() {
        let texts: Vec<String> = (0..9).map(|i| format!("text number {i}")).collect();
        let mut config = EmbedderConfig::deterministic("det-test", 16, 5);
        config.batch_size = 4;
        let whole = embed_batch(&texts, &config).unwrap();
        let left = embed_batch(&texts[..5], &config).unwrap();
        let right = embed_batch(&texts[5..], &config).unwrap();
        let glued: Vec<EmbeddingVector> = left.into_iter().chain(right).collect();
        assert_eq!(whole, glued);
    }

    #[test]
    fn quantized_round_trip_is_stable() {
        let v = vecf(&[0.123456789, -0.987654321, 0.5]);
        let q = v.quantized_f32();
        assert_eq!(q, q.quantized_f32());
    }
}
