//! In-memory vector store with exact linear-scan top-k search and a binary
//! on-disk format.
//!
//! The corpus this engine targets is small (thousands of short texts), so the
//! store trades speed for exactness and determinism: no approximate index,
//! total ordering on hits (score descending, insertion order ascending).
//!
//! # Index file format (version 1)
//!
//! ```text
//! magic            8 bytes   b"RTOPIDX1"
//! format_version   u32 LE    1
//! dim              u32 LE
//! count            u64 LE
//! normalize        u8        0 or 1
//! model_name       u32 LE length + UTF-8 bytes
//! checksum         u64 LE    FNV-1a64 over the payload section
//! payload:
//!   chunk ids      count x (u32 LE length + UTF-8 bytes)
//!   vectors        count x dim x f32 LE, row order = insertion order
//! ```

use crate::embedding::{EmbeddingVector, NORM_TOLERANCE};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"RTOPIDX1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate chunk id: {0}")]
    DuplicateChunkId(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot index a zero vector (chunk {0})")]
    ZeroVector(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index was built with embedder '{stored}' but run config expects '{expected}'")]
    ModelMismatch { stored: String, expected: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One stored record: a chunk id, its unit vector, and its insertion rank.
#[derive(Debug, Clone)]
pub struct VectorRecord {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
    pub insertion_index: usize,
}

/// A search result. Result lists are sorted by score non-increasing with ties
/// broken by ascending insertion index.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
}

/// Immutable-after-build collection of normalized chunk vectors.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    model_name: String,
    normalize: bool,
    records: Vec<VectorRecord>,
}

impl VectorStore {
    /// Builds a store from `(chunk_id, vector)` pairs. Vectors are normalized
    /// and quantized to f32 precision so that persisted indexes answer every
    /// search identically to in-memory ones.
    pub fn build(
        records: Vec<(String, EmbeddingVector)>,
        model_name: &str,
    ) -> Result<Self, StoreError> {
        let dim = records.first().map(|(_, v)| v.dim()).unwrap_or(0);
        let mut seen = HashSet::new();
        let mut stored = Vec::with_capacity(records.len());
        for (insertion_index, (chunk_id, vector)) in records.into_iter().enumerate() {
            if vector.dim() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    actual: vector.dim(),
                });
            }
            if !seen.insert(chunk_id.clone()) {
                return Err(StoreError::DuplicateChunkId(chunk_id));
            }
            let unit = vector
                .normalized()
                .map_err(|_| StoreError::ZeroVector(chunk_id.clone()))?
                .quantized_f32();
            stored.push(VectorRecord {
                chunk_id,
                vector: unit,
                insertion_index,
            });
        }
        Ok(Self {
            dim,
            model_name: model_name.to_string(),
            normalize: true,
            records: stored,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    /// Fails hard when the index was written by a different embedding model;
    /// scores are never comparable across embedding spaces.
    pub fn verify_model(&self, expected: &str) -> Result<(), StoreError> {
        if self.model_name != expected {
            return Err(StoreError::ModelMismatch {
                stored: self.model_name.clone(),
                expected: expected.to_string(),
            });
        }
        Ok(())
    }

    fn scored(&self, query: &EmbeddingVector) -> Result<Vec<(f64, usize)>, StoreError> {
        if !self.records.is_empty() && query.dim() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut scores: Vec<(f64, usize)> = self
            .records
            .iter()
            .map(|r| {
                // A zero query matches nothing; score it 0 against every record.
                let score = crate::embedding::cosine_similarity(&r.vector, query).unwrap_or(0.0);
                (score, r.insertion_index)
            })
            .collect();
        scores.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("scores are finite")
                .then(a.1.cmp(&b.1))
        });
        Ok(scores)
    }

    /// Exact top-k by cosine score (clamped to store size).
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, StoreError> {
        let scores = self.scored(query)?;
        Ok(scores
            .into_iter()
            .take(k)
            .map(|(score, idx)| SearchHit {
                chunk_id: self.records[idx].chunk_id.clone(),
                score,
            })
            .collect())
    }

    /// All hits scoring at least `floor`, truncated to `cap`.
    pub fn search_threshold(
        &self,
        query: &EmbeddingVector,
        floor: f64,
        cap: usize,
    ) -> Result<Vec<SearchHit>, StoreError> {
        let scores = self.scored(query)?;
        Ok(scores
            .into_iter()
            .take_while(|(score, _)| *score >= floor)
            .take(cap)
            .map(|(score, idx)| SearchHit {
                chunk_id: self.records[idx].chunk_id.clone(),
                score,
            })
            .collect())
    }

    /// Writes the index in the documented binary format.
    pub fn persist(&self, path: &Path) -> Result<(), StoreError> {
        let mut payload = Vec::new();
        for record in &self.records {
            let id = record.chunk_id.as_bytes();
            payload.extend_from_slice(&(id.len() as u32).to_le_bytes());
            payload.extend_from_slice(id);
        }
        for record in &self.records {
            for c in record.vector.components() {
                payload.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        let checksum = fnv1a64(&payload);

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.push(u8::from(self.normalize));
        let name = self.model_name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&checksum.to_le_bytes());
        out.extend_from_slice(&payload);

        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    /// Reads an index written by [`VectorStore::persist`].
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cursor = Cursor::new(&bytes);

        if cursor.take_bytes(8)? != MAGIC {
            return Err(StoreError::CorruptIndex("bad magic".into()));
        }
        let version = cursor.take_u32()?;
        if version != FORMAT_VERSION {
            return Err(StoreError::CorruptIndex(format!(
                "unsupported format version {version}"
            )));
        }
        let dim = cursor.take_u32()? as usize;
        let count = cursor.take_u64()? as usize;
        let normalize = cursor.take_u8()? != 0;
        let name_len = cursor.take_u32()? as usize;
        let model_name = String::from_utf8(cursor.take_bytes(name_len)?.to_vec())
            .map_err(|_| StoreError::CorruptIndex("model name is not UTF-8".into()))?;
        let checksum = cursor.take_u64()?;

        let payload = cursor.rest();
        if fnv1a64(payload) != checksum {
            return Err(StoreError::CorruptIndex("checksum mismatch".into()));
        }

        let mut cursor = Cursor::new(payload);
        let mut chunk_ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cursor.take_u32()? as usize;
            let id = String::from_utf8(cursor.take_bytes(len)?.to_vec())
                .map_err(|_| StoreError::CorruptIndex("chunk id is not UTF-8".into()))?;
            chunk_ids.push(id);
        }
        let mut records = Vec::with_capacity(count);
        for (insertion_index, chunk_id) in chunk_ids.into_iter().enumerate() {
            let mut components = Vec::with_capacity(dim);
            for _ in 0..dim {
                let raw = cursor.take_bytes(4)?;
                let value = f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
                if !value.is_finite() {
                    return Err(StoreError::CorruptIndex("non-finite component".into()));
                }
                components.push(f64::from(value));
            }
            let vector = EmbeddingVector::new(components)
                .map_err(|e| StoreError::CorruptIndex(e.to_string()))?;
            if normalize && (vector.l2_norm() - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::CorruptIndex(format!(
                    "row {insertion_index} is not unit norm"
                )));
            }
            records.push(VectorRecord {
                chunk_id,
                vector,
                insertion_index,
            });
        }
        if !cursor.is_done() {
            return Err(StoreError::CorruptIndex("trailing bytes".into()));
        }
        Ok(Self {
            dim,
            model_name,
            normalize,
            records,
        })
    }
}

/// A vector store paired with the chunk texts it indexes. This is what the
/// retriever tool and the evaluation metrics operate on: search results need
/// to resolve back to text, and re-embedding under a different evaluation
/// model needs the raw chunks.
#[derive(Debug, Clone)]
pub struct IndexedCorpus {
    pub store: VectorStore,
    texts: std::collections::BTreeMap<String, String>,
}

impl IndexedCorpus {
    pub fn new(store: VectorStore, texts: Vec<(String, String)>) -> Self {
        Self {
            store,
            texts: texts.into_iter().collect(),
        }
    }

    /// Embeds `(chunk_id, text)` pairs and builds the store in one step.
    pub fn build(
        chunks: Vec<(String, String)>,
        embedder: &dyn crate::embedding::Embedder,
    ) -> Result<Self, StoreError> {
        let texts: Vec<String> = chunks.iter().map(|(_, t)| t.clone()).collect();
        let vectors = embedder
            .embed_batch(&texts)
            .map_err(|e| StoreError::CorruptIndex(format!("embedding failed: {e}")))?;
        let records = chunks
            .iter()
            .map(|(id, _)| id.clone())
            .zip(vectors)
            .collect();
        let store = VectorStore::build(records, embedder.model_name())?;
        Ok(Self::new(store, chunks))
    }

    pub fn text_of(&self, chunk_id: &str) -> Option<&str> {
        self.texts.get(chunk_id).map(String::as_str)
    }

    /// Chunk texts in insertion order of the store.
    pub fn chunk_texts(&self) -> Vec<(String, String)> {
        self.store
            .records()
            .iter()
            .map(|r| {
                let text = self
                    .texts
                    .get(&r.chunk_id)
                    .cloned()
                    .unwrap_or_default();
                (r.chunk_id.clone(), text)
            })
            .collect()
    }

    /// Writes `index.bin` and `chunks.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        std::fs::create_dir_all(dir)?;
        self.store.persist(&dir.join("index.bin"))?;
        let texts = self.chunk_texts();
        let data = serde_json::to_vec_pretty(&texts)
            .map_err(|e| StoreError::CorruptIndex(e.to_string()))?;
        std::fs::write(dir.join("chunks.json"), data)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let store = VectorStore::load(&dir.join("index.bin"))?;
        let raw = std::fs::read_to_string(dir.join("chunks.json"))?;
        let texts: Vec<(String, String)> = serde_json::from_str(&raw)
            .map_err(|e| StoreError::CorruptIndex(format!("chunks.json: {e}")))?;
        if texts.len() != store.len() {
            return Err(StoreError::CorruptIndex(format!(
                "chunks.json lists {} texts but the index holds {} records",
                texts.len(),
                store.len()
            )));
        }
        Ok(Self::new(store, texts))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take_bytes(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(StoreError::CorruptIndex("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn take_u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take_bytes(1)?[0])
    }

    fn take_u32(&mut self) -> Result<u32, StoreError> {
        let b = self.take_bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take_u64(&mut self) -> Result<u64, StoreError> {
        let b = self.take_bytes(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;

    fn vecf(components: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(components.to_vec()).unwrap()
    }

    fn three_record_store() -> VectorStore {
        VectorStore::build(
            vec![
                ("A".into(), vecf(&[1.0, 0.0])),
                ("B".into(), vecf(&[0.0, 1.0])),
                ("C".into(), vecf(&[0.6, 0.8])),
            ],
            "det-test",
        )
        .unwrap()
    }

    #[test]
    fn build_counts_and_rejects_duplicates_and_mixed_dims() {
        assert_eq!(three_record_store().len(), 3);

        let err = VectorStore::build(
            vec![
                ("A".into(), vecf(&[1.0, 0.0])),
                ("A".into(), vecf(&[0.0, 1.0])),
            ],
            "m",
        )
        .unwrap_err();
        assert!(matches!(err, StoreError::DuplicateChunkId(id) if id == "A"));

        let err = VectorStore::build(
            vec![
                ("A".into(), vecf(&[1.0, 0.0])),
                ("B".into(), vecf(&[0.0, 1.0, 0.0])),
            ],
            "m",
        )
        .unwrap_err();
        assert!(matches!(err, StoreError::DimensionMismatch { .. }));
    }

    #[test]
    fn search_returns_exact_scores_in_order() {
        let store = three_record_store();
        let hits = store.search(&vecf(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].chunk_id, "A");
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[1].chunk_id, "C");
        assert!((hits[1].score - 0.6).abs() < 1e-7);
    }

    #[test]
    fn search_clamps_k_and_handles_empty_store() {
        let store = three_record_store();
        assert_eq!(store.search(&vecf(&[1.0, 0.0]), 10).unwrap().len(), 3);

        let empty = VectorStore::build(vec![], "m").unwrap();
        assert!(empty.search(&vecf(&[1.0, 0.0]), 5).unwrap().is_empty());
    }

    #[test]
    fn threshold_search_filters_and_caps() {
        let store = three_record_store();
        let query = vecf(&[1.0, 0.0]);
        // Scores against the query: A=1.0, C=0.6, B=0.0.
        let hits = store.search_threshold(&query, 0.4, 10).unwrap();
        assert_eq!(hits.len(), 2);

        let none = store.search_threshold(&query, 1.0 + 1e-9, 10).unwrap();
        assert!(none.is_empty());

        let all = store.search_threshold(&query, -1.0, 2).unwrap();
        assert_eq!(all, store.search(&query, 2).unwrap());
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let store = VectorStore::build(
            vec![
                ("late-dup".into(), vecf(&[0.0, 1.0])),
                ("first".into(), vecf(&[1.0, 0.0])),
                ("second".into(), vecf(&[1.0, 0.0])),
            ],
            "m",
        )
        .unwrap();
        let hits = store.search(&vecf(&[1.0, 0.0]), 3).unwrap();
        assert_eq!(hits[0].chunk_id, "first");
        assert_eq!(hits[1].chunk_id, "second");
        assert_eq!(hits[2].chunk_id, "late-dup");
    }

    #[test]
    fn persist_load_round_trip_preserves_answers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let store = three_record_store();
        store.persist(&path).unwrap();
        let loaded = VectorStore::load(&path).unwrap();

        assert_eq!(loaded.len(), store.len());
        assert_eq!(loaded.model_name(), "det-test");
        let query = vecf(&[0.7, 0.3]);
        assert_eq!(
            store.search(&query, 3).unwrap(),
            loaded.search(&query, 3).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        three_record_store().persist(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            VectorStore::load(&path),
            Err(StoreError::CorruptIndex(_))
        ));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        three_record_store().persist(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            VectorStore::load(&path),
            Err(StoreError::CorruptIndex(_))
        ));
    }

    #[test]
    fn model_mismatch_is_a_hard_error() {
        let store = three_record_store();
        assert!(store.verify_model("det-test").is_ok());
        assert!(matches!(
            store.verify_model("other-model"),
            Err(StoreError::ModelMismatch { .. })
        ));
    }

    #[test]
    fn search_matches_brute_force_on_small_store() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dim = 12;
        let n = 200;
        let records: Vec<(String, EmbeddingVector)> = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("c{i}"), EmbeddingVector::new(v).unwrap())
            })
            .collect();
        let store = VectorStore::build(records, "m").unwrap();
        let query =
            EmbeddingVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();

        // Brute force: cosine against every stored (normalized) vector.
        let mut expected: Vec<(f64, usize, String)> = store
            .records()
            .iter()
            .map(|r| {
                let score = cosine_similarity(&r.vector, &query).unwrap();
                (score, r.insertion_index, r.chunk_id.clone())
            })
            .collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

        let hits = store.search(&query, 10).unwrap();
        for (hit, exp) in hits.iter().zip(expected.iter()) {
            assert_eq!(hit.chunk_id, exp.2);
            assert_eq!(hit.score, exp.0);
        }
    }

    #[test]
    fn monotone_k_prefix_property() {
        let store = three_record_store();
        let query = vecf(&[0.9, 0.1]);
        let k2 = store.search(&query, 2).unwrap();
        let k3 = store.search(&query, 3).unwrap();
        assert_eq!(k2[..], k3[..2]);
    }
}
