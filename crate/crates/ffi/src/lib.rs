//! C ABI for the ragtopics engine.
//!
//! The surface follows the usual opaque-handle pattern: constructors return
//! pointers to heap-allocated engine objects, every fallible call returns an
//! [`RtStatus`] code, and the last error message is kept per thread for
//! callers that want detail. Strings cross the boundary as NUL-terminated
//! UTF-8; vectors as `double` buffers sized by the caller.
//!
//! Everything exposed here is deterministic: the embedder handle wraps the
//! seeded n-gram backend, so bindings can be validated without network access.

use ragtopics::embedding::{build_embedder, cosine_similarity, Embedder, EmbedderConfig, EmbeddingVector};
use ragtopics::evaluation::{self, EvalParams};
use ragtopics::vectorstore::IndexedCorpus;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DimensionMismatch = 4,
    EmbeddingFailed = 5,
    StoreFailed = 6,
    EvalFailed = 7,
    IoFailed = 8,
    IndexOutOfRange = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: impl std::fmt::Display) {
    let sanitized = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: RtStatus, message: impl std::fmt::Display) -> RtStatus {
    set_error(message);
    status
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, RtStatus> {
    if ptr.is_null() {
        set_error("null string pointer");
        return Err(RtStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("invalid UTF-8: {e}"));
        RtStatus::InvalidUtf8
    })
}

unsafe fn string_list(ptr: *const *const c_char, len: usize) -> Result<Vec<String>, RtStatus> {
    if ptr.is_null() {
        set_error("null string list");
        return Err(RtStatus::NullPointer);
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let item = *ptr.add(i);
        out.push(cstr(item)?.to_string());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Embedder handle
// ---------------------------------------------------------------------------

/// Opaque embedder handle.
pub struct RtEmbedder {
    inner: Box<dyn Embedder>,
}

/// Creates the deterministic seeded embedder. `dim` must be at least 8.
#[no_mangle]
pub extern "C" fn rt_embedder_new_deterministic(dim: usize, seed: u64) -> *mut RtEmbedder {
    if dim < 8 {
        set_error("dim must be at least 8");
        return std::ptr::null_mut();
    }
    let config = EmbedderConfig::deterministic("hash-ngram-v1", dim, seed);
    Box::into_raw(Box::new(RtEmbedder {
        inner: build_embedder(&config),
    }))
}

/// # Safety
/// `embedder` must be null or a live pointer from an embedder constructor.
#[no_mangle]
pub unsafe extern "C" fn rt_embedder_dim(embedder: *const RtEmbedder) -> usize {
    if embedder.is_null() {
        return 0;
    }
    (*embedder).inner.dim()
}

/// # Safety
/// `embedder` must be a pointer returned by an `rt_embedder_new_*` function
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn rt_embedder_free(embedder: *mut RtEmbedder) {
    if !embedder.is_null() {
        drop(Box::from_raw(embedder));
    }
}

/// Embeds one text into `out`, which must hold `rt_embedder_dim()` doubles.
///
/// # Safety
/// All pointers must be valid; `out` must point at `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_embed_text(
    embedder: *const RtEmbedder,
    text: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> RtStatus {
    if embedder.is_null() || out.is_null() {
        return fail(RtStatus::NullPointer, "null handle or output buffer");
    }
    let text = match cstr(text) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let inner = &(*embedder).inner;
    if out_len != inner.dim() {
        return fail(
            RtStatus::DimensionMismatch,
            format!("output buffer holds {out_len}, embedder dim is {}", inner.dim()),
        );
    }
    match inner.embed_one(text) {
        Ok(vector) => {
            for (i, c) in vector.components().iter().enumerate() {
                *out.add(i) = *c;
            }
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::EmbeddingFailed, e),
    }
}

/// Cosine similarity of two equal-length vectors.
///
/// # Safety
/// `a` and `b` must point at `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_cosine_similarity(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> RtStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        return fail(RtStatus::NullPointer, "null vector or output pointer");
    }
    let av = std::slice::from_raw_parts(a, len).to_vec();
    let bv = std::slice::from_raw_parts(b, len).to_vec();
    let (Ok(ea), Ok(eb)) = (EmbeddingVector::new(av), EmbeddingVector::new(bv)) else {
        return fail(RtStatus::InvalidArgument, "vectors must be finite");
    };
    match cosine_similarity(&ea, &eb) {
        Ok(sim) => {
            *out = sim;
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::InvalidArgument, e),
    }
}

// ---------------------------------------------------------------------------
// Index handles
// ---------------------------------------------------------------------------

/// Opaque builder collecting (chunk_id, text) pairs before indexing.
#[derive(Default)]
pub struct RtIndexBuilder {
    chunks: Vec<(String, String)>,
}

/// Opaque indexed corpus (vector store plus chunk texts).
pub struct RtIndex {
    inner: IndexedCorpus,
}

#[no_mangle]
pub extern "C" fn rt_index_builder_new() -> *mut RtIndexBuilder {
    Box::into_raw(Box::new(RtIndexBuilder::default()))
}

/// # Safety
/// `builder` must be a live pointer from [`rt_index_builder_new`].
#[no_mangle]
pub unsafe extern "C" fn rt_index_builder_free(builder: *mut RtIndexBuilder) {
    if !builder.is_null() {
        drop(Box::from_raw(builder));
    }
}

/// # Safety
/// `builder` must be live; `chunk_id` and `text` must be NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn rt_index_builder_add(
    builder: *mut RtIndexBuilder,
    chunk_id: *const c_char,
    text: *const c_char,
) -> RtStatus {
    if builder.is_null() {
        return fail(RtStatus::NullPointer, "null builder");
    }
    let (id, text) = match (cstr(chunk_id), cstr(text)) {
        (Ok(id), Ok(text)) => (id, text),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    (*builder).chunks.push((id.to_string(), text.to_string()));
    RtStatus::Ok
}

/// Embeds every chunk and builds the index. Consumes the builder on success.
///
/// # Safety
/// Both handles must be live; the builder pointer is invalid afterwards when
/// the call returns a non-null index.
#[no_mangle]
pub unsafe extern "C" fn rt_index_build(
    builder: *mut RtIndexBuilder,
    embedder: *const RtEmbedder,
) -> *mut RtIndex {
    if builder.is_null() || embedder.is_null() {
        set_error("null builder or embedder");
        return std::ptr::null_mut();
    }
    let chunks = std::mem::take(&mut (*builder).chunks);
    match IndexedCorpus::build(chunks, (*embedder).inner.as_ref()) {
        Ok(inner) => {
            drop(Box::from_raw(builder));
            Box::into_raw(Box::new(RtIndex { inner }))
        }
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `index` must be null or a live pointer from an index constructor.
#[no_mangle]
pub unsafe extern "C" fn rt_index_len(index: *const RtIndex) -> usize {
    if index.is_null() {
        return 0;
    }
    (*index).inner.store.len()
}

/// # Safety
/// `index` must be a live pointer from an index constructor.
#[no_mangle]
pub unsafe extern "C" fn rt_index_free(index: *mut RtIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Persists the index (binary store plus chunk texts) into a directory.
///
/// # Safety
/// `index` must be live; `dir` must be NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn rt_index_save(index: *const RtIndex, dir: *const c_char) -> RtStatus {
    if index.is_null() {
        return fail(RtStatus::NullPointer, "null index");
    }
    let dir = match cstr(dir) {
        Ok(d) => PathBuf::from(d),
        Err(s) => return s,
    };
    match (*index).inner.save(&dir) {
        Ok(()) => RtStatus::Ok,
        Err(e) => fail(RtStatus::IoFailed, e),
    }
}

/// Loads an index persisted by [`rt_index_save`]. Returns null on failure.
///
/// # Safety
/// `dir` must be NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn rt_index_load(dir: *const c_char) -> *mut RtIndex {
    let dir = match cstr(dir) {
        Ok(d) => PathBuf::from(d),
        Err(_) => return std::ptr::null_mut(),
    };
    match IndexedCorpus::load(&dir) {
        Ok(inner) => Box::into_raw(Box::new(RtIndex { inner })),
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

/// Opaque search-result list.
pub struct RtHits {
    ids: Vec<CString>,
    scores: Vec<f64>,
}

/// Embeds `query` and returns the exact top-k hits. Returns null on failure.
///
/// # Safety
/// Handles must be live; `query` must be NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn rt_search(
    index: *const RtIndex,
    embedder: *const RtEmbedder,
    query: *const c_char,
    k: usize,
) -> *mut RtHits {
    if index.is_null() || embedder.is_null() {
        set_error("null index or embedder");
        return std::ptr::null_mut();
    }
    let query = match cstr(query) {
        Ok(q) => q,
        Err(_) => return std::ptr::null_mut(),
    };
    let vector = match (*embedder).inner.embed_one(query) {
        Ok(v) => v,
        Err(e) => {
            set_error(e);
            return std::ptr::null_mut();
        }
    };
    match (*index).inner.store.search(&vector, k) {
        Ok(hits) => {
            let ids = hits
                .iter()
                .map(|h| CString::new(h.chunk_id.as_str()).unwrap_or_default())
                .collect();
            let scores = hits.iter().map(|h| h.score).collect();
            Box::into_raw(Box::new(RtHits { ids, scores }))
        }
        Err(e) => {
            set_error(e);
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `hits` must be null or a live pointer from [`rt_search`].
#[no_mangle]
pub unsafe extern "C" fn rt_hits_len(hits: *const RtHits) -> usize {
    if hits.is_null() {
        return 0;
    }
    (*hits).ids.len()
}

/// Score of hit `i`, or NaN when out of range.
///
/// # Safety
/// `hits` must be null or a live pointer from [`rt_search`].
#[no_mangle]
pub unsafe extern "C" fn rt_hits_score(hits: *const RtHits, i: usize) -> f64 {
    if hits.is_null() {
        return f64::NAN;
    }
    let hits = &*hits;
    hits.scores.get(i).copied().unwrap_or(f64::NAN)
}

/// Chunk id of hit `i`; owned by the hits handle, null when out of range.
///
/// # Safety
/// `hits` must be null or a live pointer from [`rt_search`].
#[no_mangle]
pub unsafe extern "C" fn rt_hits_chunk_id(hits: *const RtHits, i: usize) -> *const c_char {
    if hits.is_null() {
        return std::ptr::null();
    }
    let hits = &*hits;
    hits.ids
        .get(i)
        .map(|s| s.as_ptr())
        .unwrap_or(std::ptr::null())
}

/// # Safety
/// `hits` must be a live pointer from [`rt_search`].
#[no_mangle]
pub unsafe extern "C" fn rt_hits_free(hits: *mut RtHits) {
    if !hits.is_null() {
        drop(Box::from_raw(hits));
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Weighted reverse-retrieval relevance of a topic list against an index.
///
/// # Safety
/// Handles must be live; `labels` must point at `labels_len` NUL-terminated
/// UTF-8 strings; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_validity_score(
    index: *const RtIndex,
    embedder: *const RtEmbedder,
    labels: *const *const c_char,
    labels_len: usize,
    floor: f64,
    cap: usize,
    out_score: *mut f64,
) -> RtStatus {
    if index.is_null() || embedder.is_null() || out_score.is_null() {
        return fail(RtStatus::NullPointer, "null handle or output pointer");
    }
    let labels = match string_list(labels, labels_len) {
        Ok(l) => l,
        Err(s) => return s,
    };
    let params = EvalParams {
        floor,
        cap,
        fixed_k: None,
    };
    match evaluation::validity(
        "ffi",
        &labels,
        &(*index).inner,
        (*embedder).inner.as_ref(),
        &params,
    ) {
        Ok(report) => {
            *out_score = report.weighted_score;
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::EvalFailed, e),
    }
}

/// Directed reliability score between two topic lists (anchor → other).
///
/// # Safety
/// `embedder` must be live; both label arrays must hold NUL-terminated UTF-8
/// strings of the stated lengths; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rt_reliability_score(
    embedder: *const RtEmbedder,
    anchor: *const *const c_char,
    anchor_len: usize,
    other: *const *const c_char,
    other_len: usize,
    out_score: *mut f64,
) -> RtStatus {
    if embedder.is_null() || out_score.is_null() {
        return fail(RtStatus::NullPointer, "null handle or output pointer");
    }
    let anchor = match string_list(anchor, anchor_len) {
        Ok(l) => l,
        Err(s) => return s,
    };
    let other = match string_list(other, other_len) {
        Ok(l) => l,
        Err(s) => return s,
    };
    let rounds = vec![("anchor".to_string(), anchor), ("other".to_string(), other)];
    match evaluation::reliability(&rounds, (*embedder).inner.as_ref(), 0, false) {
        Ok(report) => {
            *out_score = report.scores_vs_anchor[0].score;
            RtStatus::Ok
        }
        Err(e) => fail(RtStatus::EvalFailed, e),
    }
}
