//! Corpus ingestion and chunking.
//!
//! Documents come from an RFC-4180 CSV with a header row; the text column is
//! configurable. Each document is split into character-offset chunks suitable
//! for embedding. Short texts (tweets) map 1:1 to chunks under the default
//! policy, which keeps reverse retrieval interpretable.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("column '{0}' not found in CSV header")]
    MissingColumn(String),
    #[error("corpus has no usable rows")]
    EmptyCorpus,
    #[error("malformed CSV row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A source record: one CSV data row with non-empty text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    /// 0-based data-row index in the input file (header excluded).
    pub source_row: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

/// A retrievable segment of a document. `span` holds character offsets into
/// the parent text and `text` always equals the spanned substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub span: (usize, usize),
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub max_chars: usize,
    pub overlap_chars: usize,
    pub prefer_sentence_boundaries: bool,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            max_chars: 512,
            overlap_chars: 64,
            prefer_sentence_boundaries: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Collapse exact-duplicate texts, keeping the first occurrence.
    pub dedup: bool,
    /// Skip malformed rows and count them instead of failing fast.
    pub skip_malformed: bool,
}

/// Result of ingesting a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ingested {
    pub documents: Vec<Document>,
    pub duplicates_collapsed: usize,
    pub empty_rows_skipped: usize,
    pub malformed_rows_skipped: usize,
}

/// Reads the CSV at `path`, producing one [`Document`] per data row with
/// non-empty text. Row text is trimmed; `source_row` follows the file order.
pub fn ingest_csv(
    path: &Path,
    text_column: &str,
    options: IngestOptions,
) -> Result<Ingested, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRow {
            row: 0,
            detail: e.to_string(),
        })?
        .clone();
    let text_idx = headers
        .iter()
        .position(|h| h == text_column)
        .ok_or_else(|| CorpusError::MissingColumn(text_column.to_string()))?;

    let mut documents = Vec::new();
    let mut seen_texts: BTreeMap<String, ()> = BTreeMap::new();
    let mut duplicates_collapsed = 0;
    let mut empty_rows_skipped = 0;
    let mut malformed_rows_skipped = 0;

    for (source_row, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                if options.skip_malformed {
                    malformed_rows_skipped += 1;
                    continue;
                }
                return Err(CorpusError::MalformedRow {
                    row: source_row,
                    detail: e.to_string(),
                });
            }
        };
        let raw = record.get(text_idx).unwrap_or("");
        let text = raw.trim();
        if text.is_empty() {
            empty_rows_skipped += 1;
            continue;
        }
        if options.dedup {
            if seen_texts.contains_key(text) {
                duplicates_collapsed += 1;
                continue;
            }
            seen_texts.insert(text.to_string(), ());
        }
        let mut meta = BTreeMap::new();
        for (i, header) in headers.iter().enumerate() {
            if i != text_idx {
                if let Some(value) = record.get(i) {
                    if !value.is_empty() {
                        meta.insert(header.to_string(), value.to_string());
                    }
                }
            }
        }
        documents.push(Document {
            doc_id: format!("d{source_row:06}"),
            text: text.to_string(),
            source_row,
            meta,
        });
    }

    if documents.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Ingested {
        documents,
        duplicates_collapsed,
        empty_rows_skipped,
        malformed_rows_skipped,
    })
}

const SENTENCE_TERMINATORS: [char; 3] = ['.', '!', '?'];

/// Splits a document into chunks under `policy`.
///
/// The sliding rule: each chunk ends at `start + max_chars` (or earlier at a
/// sentence boundary when preferred), and the next chunk starts
/// `overlap_chars` before the previous end. Spans are character offsets;
/// their union always covers the document text.
pub fn chunk(doc: &Document, policy: &ChunkPolicy) -> Vec<Chunk> {
    assert!(
        policy.max_chars > policy.overlap_chars,
        "max_chars must exceed overlap_chars"
    );
    let chars: Vec<char> = doc.text.chars().collect();
    let total = chars.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut ordinal = 0;

    while start < total {
        let hard_end = (start + policy.max_chars).min(total);
        let end = if policy.prefer_sentence_boundaries && hard_end < total {
            find_sentence_boundary(&chars, start, hard_end, policy.max_chars)
        } else {
            hard_end
        };
        let text: String = chars[start..end].iter().collect();
        chunks.push(Chunk {
            chunk_id: format!("{}:{}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            text,
            span: (start, end),
            ordinal,
        });
        if end >= total {
            break;
        }
        // Guarantee forward progress even with aggressive overlap.
        start = end.saturating_sub(policy.overlap_chars).max(start + 1);
        ordinal += 1;
    }
    chunks
}

/// Looks backwards from the tentative end, within the last fifth of the chunk,
/// for a sentence terminator followed by whitespace; returns the position just
/// past the terminator, or the tentative end when none exists.
fn find_sentence_boundary(chars: &[char], start: usize, hard_end: usize, max_chars: usize) -> usize {
    let window = (max_chars / 5).max(1);
    let search_from = hard_end.saturating_sub(window).max(start + 1);
    for i in (search_from..hard_end).rev() {
        if SENTENCE_TERMINATORS.contains(&chars[i - 1]) {
            let next_is_break = chars.get(i).map(|c| c.is_whitespace()).unwrap_or(true);
            if next_is_break {
                return i;
            }
        }
    }
    hard_end
}

/// Per-document entry of the corpus manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub source_row: usize,
    pub char_length: usize,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub text_column: String,
    pub policy: ChunkPolicy,
    pub document_count: usize,
    pub chunk_count: usize,
    pub duplicates_collapsed: usize,
    pub empty_rows_skipped: usize,
    pub malformed_rows_skipped: usize,
    pub entries: Vec<ManifestEntry>,
}

/// Chunks every document and assembles the manifest alongside the chunk list.
pub fn chunk_corpus(
    ingested: &Ingested,
    text_column: &str,
    policy: &ChunkPolicy,
) -> (Vec<Chunk>, Manifest) {
    let mut chunks = Vec::new();
    let mut entries = Vec::with_capacity(ingested.documents.len());
    for doc in &ingested.documents {
        let doc_chunks = chunk(doc, policy);
        entries.push(ManifestEntry {
            doc_id: doc.doc_id.clone(),
            source_row: doc.source_row,
            char_length: doc.text.chars().count(),
            chunk_count: doc_chunks.len(),
        });
        chunks.extend(doc_chunks);
    }
    let manifest = Manifest {
        text_column: text_column.to_string(),
        policy: *policy,
        document_count: ingested.documents.len(),
        chunk_count: chunks.len(),
        duplicates_collapsed: ingested.duplicates_collapsed,
        empty_rows_skipped: ingested.empty_rows_skipped,
        malformed_rows_skipped: ingested.malformed_rows_skipped,
        entries,
    };
    (chunks, manifest)
}
