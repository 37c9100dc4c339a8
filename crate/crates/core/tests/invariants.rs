//! Property tests for the module-level invariants.

use proptest::prelude::*;
use ragtopics::corpus::{chunk, ChunkPolicy, Document};
use ragtopics::embedding::{
    cosine_similarity, deterministic_embed, embed_batch, EmbedderConfig, EmbeddingVector,
};
use ragtopics::vectorstore::VectorStore;

fn finite_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
}

fn nonzero_vector(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
    finite_vector(dim)
        .prop_filter("non-zero", |v| v.iter().any(|c| c.abs() > 1e-6))
        .prop_map(|v| EmbeddingVector::new(v).unwrap())
}

proptest! {
    #[test]
    fn cosine_self_similarity_is_one(v in nonzero_vector(16)) {
        let sim = cosine_similarity(&v, &v).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_scale_invariance(v in nonzero_vector(16), w in nonzero_vector(16), c in 1e-3f64..1e3) {
        let scaled = EmbeddingVector::new(v.components().iter().map(|x| x * c).collect()).unwrap();
        let a = cosine_similarity(&v, &w).unwrap();
        let b = cosine_similarity(&scaled, &w).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn cosine_symmetry_is_exact(v in nonzero_vector(16), w in nonzero_vector(16)) {
        prop_assert_eq!(
            cosine_similarity(&v, &w).unwrap(),
            cosine_similarity(&w, &v).unwrap()
        );
    }

    #[test]
    fn deterministic_embed_unit_norm_and_repeatable(
        text in "[a-z ]{1,60}",
        seed in 0u64..1000,
    ) {
        let a = deterministic_embed(&text, 16, seed);
        let b = deterministic_embed(&text, 16, seed);
        prop_assert_eq!(&a, &b);
        prop_assert!((a.l2_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embed_batch_concatenation(
        texts in prop::collection::vec("[a-z]{1,12}( [a-z]{1,12}){0,4}", 1..12),
        split in 0usize..12,
    ) {
        let split = split.min(texts.len());
        let config = EmbedderConfig::deterministic("det", 16, 3);
        let whole = embed_batch(&texts, &config).unwrap();
        let left = embed_batch(&texts[..split], &config).unwrap();
        let right = embed_batch(&texts[split..], &config).unwrap();
        let glued: Vec<_> = left.into_iter().chain(right).collect();
        prop_assert_eq!(whole, glued);
    }

    #[test]
    fn chunking_reconstructs_and_respects_bounds(
        text in "[a-zA-Z ,.!?]{1,600}",
        max_chars in 20usize..120,
        overlap in 0usize..19,
        sentences in any::<bool>(),
    ) {
        prop_assume!(!text.trim().is_empty());
        let doc = Document {
            doc_id: "d0".into(),
            text: text.clone(),
            source_row: 0,
            meta: Default::default(),
        };
        let policy = ChunkPolicy {
            max_chars,
            overlap_chars: overlap,
            prefer_sentence_boundaries: sentences,
        };
        let chunks = chunk(&doc, &policy);
        prop_assert!(!chunks.is_empty());

        let chars: Vec<char> = text.chars().collect();
        let mut covered = 0usize;
        let mut rebuilt = String::new();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.ordinal, i);
            prop_assert!(c.span.1 > c.span.0);
            prop_assert!(c.text.chars().count() <= max_chars);
            let expected: String = chars[c.span.0..c.span.1].iter().collect();
            prop_assert_eq!(&c.text, &expected);
            // Spans tile the document without gaps.
            prop_assert!(c.span.0 <= covered);
            let skip = covered.saturating_sub(c.span.0);
            rebuilt.extend(c.text.chars().skip(skip));
            covered = covered.max(c.span.1);
        }
        prop_assert_eq!(covered, chars.len());
        prop_assert_eq!(rebuilt, text);

        // Determinism.
        prop_assert_eq!(chunk(&doc, &policy), chunks);
    }

    #[test]
    fn threshold_at_floor_minus_one_equals_topk(
        seeds in prop::collection::vec(0u64..5000, 2..30),
        k in 1usize..10,
    ) {
        let records: Vec<(String, EmbeddingVector)> = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("c{i}"), deterministic_embed(&format!("text {s}"), 16, 1)))
            .collect();
        let store = VectorStore::build(records, "det").unwrap();
        let query = deterministic_embed("query text", 16, 1);
        let a = store.search_threshold(&query, -1.0, k).unwrap();
        let b = store.search(&query, k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn search_k_is_prefix_of_k_plus_one(
        seeds in prop::collection::vec(0u64..5000, 2..30),
        k in 1usize..10,
    ) {
        let records: Vec<(String, EmbeddingVector)> = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("c{i}"), deterministic_embed(&format!("text {s}"), 16, 2)))
            .collect();
        let store = VectorStore::build(records, "det").unwrap();
        let query = deterministic_embed("another query", 16, 2);
        let smaller = store.search(&query, k).unwrap();
        let larger = store.search(&query, k + 1).unwrap();
        prop_assert_eq!(&smaller[..], &larger[..smaller.len()]);
    }
}
