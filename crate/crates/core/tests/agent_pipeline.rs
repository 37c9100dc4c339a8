//! Full-stack agent tests: indexed corpus + scripted chat backend, through
//! retriever observations, rounds, and persisted transcripts.

mod common;

use common::{final_answer_output, retriever_call_output, synthetic_tweets, REFERENCE_LABELS};
use ragtopics::agent::{retriever_tool, AgentLimits};
use ragtopics::embedding::{build_embedder, Embedder, EmbedderConfig};
use ragtopics::llm::{CompletionParams, ScriptedClient};
use ragtopics::topicmodel::{run_round, run_rounds, RoundContext, RoundFailure, TopicParams};
use ragtopics::vectorstore::IndexedCorpus;
use serde_json::{json, Map, Value};
use std::sync::Arc;

fn build_corpus() -> (Arc<IndexedCorpus>, Arc<dyn Embedder>) {
    let embedder: Arc<dyn Embedder> =
        Arc::from(build_embedder(&EmbedderConfig::deterministic("hash-ngram-v1", 64, 42)));
    let chunks: Vec<(String, String)> = synthetic_tweets()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("d{i:06}:0"), t))
        .collect();
    let corpus = Arc::new(IndexedCorpus::build(chunks, embedder.as_ref()).unwrap());
    (corpus, embedder)
}

fn query_args(query: &str) -> Map<String, Value> {
    let mut args = Map::new();
    args.insert("query".to_string(), json!(query));
    args
}

fn context(corpus: Arc<IndexedCorpus>, embedder: Arc<dyn Embedder>) -> RoundContext {
    RoundContext {
        corpus,
        embedder,
        llm_params: CompletionParams::default(),
        topic_params: TopicParams::default(),
        agent_limits: AgentLimits::default(),
        retriever_k: 5,
        config_snapshot: json!({"test": true}),
        config_hash: "testhash".to_string(),
    }
}

#[test]
fn retriever_self_query_scores_one() {
    let (corpus, embedder) = build_corpus();
    let stored_text = synthetic_tweets()[0].clone();
    let tool = retriever_tool(corpus, embedder, 3);
    let observation = tool.invoke(&query_args(&stored_text));
    assert!(
        observation.starts_with("Document 1 (score 1.0000):"),
        "unexpected observation head: {observation}"
    );
    assert!(observation.contains(&stored_text));
}

#[test]
fn retriever_suppresses_already_seen_chunks() {
    let (corpus, embedder) = build_corpus();
    let tool = retriever_tool(corpus, embedder, 3);
    let text = synthetic_tweets()[0].clone();
    let first = tool.invoke(&query_args(&text));
    assert!(!first.contains("suppressed"));
    let second = tool.invoke(&query_args(&text));
    assert!(
        second.contains("previously retrieved document"),
        "second observation should note suppression: {second}"
    );
    // The same query again suppresses all three prior hits.
    let third = tool.invoke(&query_args(&text));
    assert!(third.contains("3 previously retrieved documents suppressed"));
}

#[test]
fn retriever_clamps_to_store_size() {
    let embedder: Arc<dyn Embedder> =
        Arc::from(build_embedder(&EmbedderConfig::deterministic("hash-ngram-v1", 64, 42)));
    let chunks: Vec<(String, String)> = synthetic_tweets()
        .into_iter()
        .take(3)
        .enumerate()
        .map(|(i, t)| (format!("c{i}"), t))
        .collect();
    let corpus = Arc::new(IndexedCorpus::build(chunks, embedder.as_ref()).unwrap());
    let tool = retriever_tool(corpus, embedder, 5);
    let observation = tool.invoke(&query_args("vaccine"));
    assert!(observation.contains("Document 3"));
    assert!(!observation.contains("Document 4"));
}

#[test]
fn retriever_reports_bad_arguments_as_observation() {
    let (corpus, embedder) = build_corpus();
    let tool = retriever_tool(corpus, embedder, 3);
    let observation = tool.invoke(&Map::new());
    assert!(observation.starts_with("retriever error:"));
}

#[test]
fn round_replays_reference_script() {
    let (corpus, embedder) = build_corpus();
    let ctx = context(corpus, embedder);
    let client = ScriptedClient::new(vec![
        retriever_call_output(),
        final_answer_output(&REFERENCE_LABELS),
    ]);
    let run = run_round(&ctx, &client, 1);
    let result = run.result.expect("round succeeds");
    assert_eq!(result.round_number, 1);
    assert_eq!(result.topics.len(), 10);
    for (topic, expected) in result.topics.iter().zip(REFERENCE_LABELS) {
        assert_eq!(topic.label, expected);
    }
    assert_eq!(run.transcripts.len(), 1);
    assert_eq!(result.transcript_ref, run.transcripts[0].envelope.run_id);
    assert_eq!(
        run.transcripts[0].transcript.step_kinds(),
        vec!["thought", "tool_call", "observation", "thought", "final_answer"]
    );
}

#[test]
fn nine_topics_twice_fails_after_one_retry() {
    let (corpus, embedder) = build_corpus();
    let ctx = context(corpus, embedder);
    let nine = &REFERENCE_LABELS[..9];
    let client = ScriptedClient::new(vec![
        final_answer_output(nine),
        final_answer_output(nine),
    ]);
    let run = run_round(&ctx, &client, 1);
    assert_eq!(run.transcripts.len(), 2, "one retry means two transcripts");
    match run.result {
        Err(RoundFailure::Topics(e)) => {
            assert!(e.to_string().contains("expected 10 topics, got 9"));
        }
        other => panic!("expected WrongTopicCount, got {other:?}"),
    }
}

#[test]
fn wrong_count_then_valid_recovers_on_retry() {
    let (corpus, embedder) = build_corpus();
    let ctx = context(corpus, embedder);
    let client = ScriptedClient::new(vec![
        final_answer_output(&REFERENCE_LABELS[..9]),
        final_answer_output(&REFERENCE_LABELS),
    ]);
    let run = run_round(&ctx, &client, 1);
    assert_eq!(run.transcripts.len(), 2);
    let result = run.result.expect("retry succeeds");
    assert_eq!(result.transcript_ref, "round-01-a2");
}

#[test]
fn rounds_collect_partial_failures() {
    let (corpus, embedder) = build_corpus();
    let ctx = context(corpus, embedder);
    // Each round gets a fresh client; the third script is empty so that round
    // fails with script exhaustion while others succeed.
    let mut served = 0usize;
    let runs = run_rounds(
        &ctx,
        move || {
            served += 1;
            if served == 2 {
                Box::new(ScriptedClient::new(vec![]))
            } else {
                Box::new(ScriptedClient::new(vec![
                    retriever_call_output(),
                    final_answer_output(&REFERENCE_LABELS),
                ]))
            }
        },
        3,
        None,
    )
    .unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs[0].result.is_ok());
    assert!(matches!(runs[1].result, Err(RoundFailure::Agent(_))));
    assert!(runs[2].result.is_ok());
}

#[test]
fn identical_scripted_rounds_persist_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    for target in [&run_a, &run_b] {
        let (corpus, embedder) = build_corpus();
        let ctx = context(corpus, embedder);
        run_rounds(
            &ctx,
            || {
                Box::new(ScriptedClient::new(vec![
                    retriever_call_output(),
                    final_answer_output(&REFERENCE_LABELS),
                ]))
            },
            1,
            Some(target),
        )
        .unwrap();
    }
    let read =
        |p: &std::path::Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };

    // Round results are byte identical.
    let bytes_a = std::fs::read(run_a.join("rounds/round-01.json")).unwrap();
    let bytes_b = std::fs::read(run_b.join("rounds/round-01.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);

    // Transcript bodies are identical; only envelope timestamps may differ.
    let ta = read(&run_a.join("transcripts/round-01-a1.json"));
    let tb = read(&run_b.join("transcripts/round-01-a1.json"));
    assert_eq!(ta["transcript"], tb["transcript"]);
    assert_eq!(ta["envelope"]["run_id"], tb["envelope"]["run_id"]);
    assert_eq!(ta["envelope"]["config_hash"], tb["envelope"]["config_hash"]);
}

#[test]
fn round_result_traceable_to_transcript() {
    let (corpus, embedder) = build_corpus();
    let ctx = context(corpus, embedder);
    let client = ScriptedClient::new(vec![
        retriever_call_output(),
        final_answer_output(&REFERENCE_LABELS),
    ]);
    let run = run_round(&ctx, &client, 1);
    let result = run.result.unwrap();
    let transcript = run
        .transcripts
        .iter()
        .find(|t| t.envelope.run_id == result.transcript_ref)
        .expect("transcript_ref resolves");
    let answer = transcript
        .transcript
        .final_answer()
        .expect("successful run has a final answer");
    let labels: Vec<String> = answer["answer"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let parsed = ragtopics::topicmodel::parse_topics(&labels, 10, 3).unwrap();
    assert_eq!(
        parsed.iter().map(|t| t.label.as_str()).collect::<Vec<_>>(),
        result.topics.iter().map(|t| t.label.as_str()).collect::<Vec<_>>()
    );
}
