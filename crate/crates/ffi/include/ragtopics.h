#ifndef RAGTOPICS_H
#define RAGTOPICS_H

/* Generated by cbindgen from ragtopics-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum RtStatus {
  RT_STATUS_OK = 0,
  RT_STATUS_NULL_POINTER = 1,
  RT_STATUS_INVALID_UTF8 = 2,
  RT_STATUS_INVALID_ARGUMENT = 3,
  RT_STATUS_DIMENSION_MISMATCH = 4,
  RT_STATUS_EMBEDDING_FAILED = 5,
  RT_STATUS_STORE_FAILED = 6,
  RT_STATUS_EVAL_FAILED = 7,
  RT_STATUS_IO_FAILED = 8,
  RT_STATUS_INDEX_OUT_OF_RANGE = 9,
} RtStatus;

/**
 * Opaque embedder handle.
 */
typedef struct RtEmbedder RtEmbedder;

/**
 * Opaque search-result list.
 */
typedef struct RtHits RtHits;

/**
 * Opaque indexed corpus (vector store plus chunk texts).
 */
typedef struct RtIndex RtIndex;

/**
 * Opaque builder collecting (chunk_id, text) pairs before indexing.
 */
typedef struct RtIndexBuilder RtIndexBuilder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rt_version(void);

/**
 * Creates the deterministic seeded embedder. `dim` must be at least 8.
 */
struct RtEmbedder *rt_embedder_new_deterministic(uintptr_t dim, uint64_t seed);

/**
 * # Safety
 * `embedder` must be null or a live pointer from an embedder constructor.
 */
uintptr_t rt_embedder_dim(const struct RtEmbedder *embedder);

/**
 * # Safety
 * `embedder` must be a pointer returned by an `rt_embedder_new_*` function
 * that has not been freed yet.
 */
void rt_embedder_free(struct RtEmbedder *embedder);

/**
 * Embeds one text into `out`, which must hold `rt_embedder_dim()` doubles.
 *
 * # Safety
 * All pointers must be valid; `out` must point at `out_len` writable doubles.
 */
enum RtStatus rt_embed_text(const struct RtEmbedder *embedder,
                            const char *text,
                            double *out,
                            uintptr_t out_len);

/**
 * Cosine similarity of two equal-length vectors.
 *
 * # Safety
 * `a` and `b` must point at `len` readable doubles; `out` must be writable.
 */
enum RtStatus rt_cosine_similarity(const double *a, const double *b, uintptr_t len, double *out);

struct RtIndexBuilder *rt_index_builder_new(void);

/**
 * # Safety
 * `builder` must be a live pointer from [`rt_index_builder_new`].
 */
void rt_index_builder_free(struct RtIndexBuilder *builder);

/**
 * # Safety
 * `builder` must be live; `chunk_id` and `text` must be NUL-terminated UTF-8.
 */
enum RtStatus rt_index_builder_add(struct RtIndexBuilder *builder,
                                   const char *chunk_id,
                                   const char *text);

/**
 * Embeds every chunk and builds the index. Consumes the builder on success.
 *
 * # Safety
 * Both handles must be live; the builder pointer is invalid afterwards when
 * the call returns a non-null index.
 */
struct RtIndex *rt_index_build(struct RtIndexBuilder *builder, const struct RtEmbedder *embedder);

/**
 * # Safety
 * `index` must be null or a live pointer from an index constructor.
 */
uintptr_t rt_index_len(const struct RtIndex *index);

/**
 * # Safety
 * `index` must be a live pointer from an index constructor.
 */
void rt_index_free(struct RtIndex *index);

/**
 * Persists the index (binary store plus chunk texts) into a directory.
 *
 * # Safety
 * `index` must be live; `dir` must be NUL-terminated UTF-8.
 */
enum RtStatus rt_index_save(const struct RtIndex *index, const char *dir);

/**
 * Loads an index persisted by [`rt_index_save`]. Returns null on failure.
 *
 * # Safety
 * `dir` must be NUL-terminated UTF-8.
 */
struct RtIndex *rt_index_load(const char *dir);

/**
 * Embeds `query` and returns the exact top-k hits. Returns null on failure.
 *
 * # Safety
 * Handles must be live; `query` must be NUL-terminated UTF-8.
 */
struct RtHits *rt_search(const struct RtIndex *index,
                         const struct RtEmbedder *embedder,
                         const char *query,
                         uintptr_t k);

/**
 * # Safety
 * `hits` must be null or a live pointer from [`rt_search`].
 */
uintptr_t rt_hits_len(const struct RtHits *hits);

/**
 * Score of hit `i`, or NaN when out of range.
 *
 * # Safety
 * `hits` must be null or a live pointer from [`rt_search`].
 */
double rt_hits_score(const struct RtHits *hits, uintptr_t i);

/**
 * Chunk id of hit `i`; owned by the hits handle, null when out of range.
 *
 * # Safety
 * `hits` must be null or a live pointer from [`rt_search`].
 */
const char *rt_hits_chunk_id(const struct RtHits *hits, uintptr_t i);

/**
 * # Safety
 * `hits` must be a live pointer from [`rt_search`].
 */
void rt_hits_free(struct RtHits *hits);

/**
 * Weighted reverse-retrieval relevance of a topic list against an index.
 *
 * # Safety
 * Handles must be live; `labels` must point at `labels_len` NUL-terminated
 * UTF-8 strings; `out_score` must be writable.
 */
enum RtStatus rt_validity_score(const struct RtIndex *index,
                                const struct RtEmbedder *embedder,
                                const char *const *labels,
                                uintptr_t labels_len,
                                double floor,
                                uintptr_t cap,
                                double *out_score);

/**
 * Directed reliability score between two topic lists (anchor → other).
 *
 * # Safety
 * `embedder` must be live; both label arrays must hold NUL-terminated UTF-8
 * strings of the stated lengths; `out_score` must be writable.
 */
enum RtStatus rt_reliability_score(const struct RtEmbedder *embedder,
                                   const char *const *anchor,
                                   uintptr_t anchor_len,
                                   const char *const *other,
                                   uintptr_t other_len,
                                   double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAGTOPICS_H */
