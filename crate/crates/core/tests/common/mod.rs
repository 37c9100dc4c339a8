//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)] // not every test target uses every fixture

use ragtopics::config::{LlmBackendConfig, RunConfig};
use ragtopics::embedding::EmbedderConfig;
use std::path::Path;

/// The ten labels of the reference final-answer example.
pub const REFERENCE_LABELS: [&str; 10] = [
    "Risk-Benefit Analysis",
    "Vaccine Safety",
    "Long-Term Effects",
    "Natural Immunity",
    "Political Motivation",
    "Vaccine Efficacy",
    "Vaccine Side Effects",
    "Vaccine Misinformation",
    "Vaccine Trust",
    "Vaccine Mandates",
];

/// Raw model output calling the retriever, shaped like real agent output.
pub fn retriever_call_output() -> String {
    "Thought: To identify topics related to COVID-19 vaccine hesitancy, I will perform \
     multiple queries using the 'retriever' tool. I will use diverse phrasings to ensure a \
     comprehensive exploration of the data.\n\nAction:\n{\n  \"action\": \"retriever\",\n  \
     \"action_input\": {\"query\": \"Identify specific topics related to COVID-19 vaccine \
     hesitancy.\"}\n}"
        .to_string()
}

/// Raw model output submitting the final answer with the given labels.
pub fn final_answer_output(labels: &[&str]) -> String {
    let entries: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("\"Topic {}: {}\"", i + 1, l))
        .collect();
    format!(
        "Thought: Based on the retrieved documents, I will now identify specific topics \
         related to COVID-19 vaccine hesitancy, ensuring each topic is no more than three \
         words.\n\nAction:\n{{\n  \"action\": \"final_answer\",\n  \"action_input\": \
         {{\"answer\": [{}]}}\n}}",
        entries.join(", ")
    )
}

/// Twenty short synthetic tweets about distinct aspects of the test subject.
pub fn synthetic_tweets() -> Vec<String> {
    [
        "vaccine safety worries keep my family up at night",
        "the new vaccine seems safe according to my doctor",
        "side effects after the second dose were rough for me",
        "mild side effects are normal says the nurse",
        "i do not trust the government health agencies anymore",
        "trust in public institutions is at an all time low",
        "politicians are pushing vaccines for votes not health",
        "this vaccine rollout is pure political theater",
        "what about long term effects nobody studied them",
        "long term data is still missing for this shot",
        "my natural immunity should count for something",
        "natural infection gave me antibodies already",
        "efficacy numbers keep changing every month",
        "how effective is the booster really",
        "mandates at work forced my hand on vaccination",
        "vaccine mandates are government overreach plain and simple",
        "so much misinformation spreading on social media",
        "fact checkers flag vaccine myths daily",
        "risk versus benefit math matters for young people",
        "weighing risks and benefits before my appointment",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Writes the synthetic tweets as a `id,text` CSV usable by the CLI.
pub fn write_synthetic_csv(path: &Path) {
    let mut out = String::from("id,text\n");
    for (i, tweet) in synthetic_tweets().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, tweet));
    }
    std::fs::write(path, out).unwrap();
}

/// A fully offline run configuration: scripted chat backend, deterministic
/// embedders, artifacts under `artifact_dir`.
pub fn offline_config(csv: &Path, script: &Path, artifact_dir: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.corpus.csv_path = Some(csv.to_path_buf());
    config.index_embedder = EmbedderConfig::deterministic("hash-ngram-v1", 64, 42);
    config.eval_embedder = EmbedderConfig::deterministic("hash-ngram-v1", 64, 42);
    config.llm.backend = LlmBackendConfig::Scripted {
        script_path: script.to_path_buf(),
    };
    config.artifact_dir = artifact_dir.to_path_buf();
    config
}

/// Writes a script file replaying one retriever call and then the reference
/// final answer (one round's worth of completions).
pub fn write_round_script(path: &Path) {
    let script = vec![
        retriever_call_output(),
        final_answer_output(&REFERENCE_LABELS),
    ];
    std::fs::write(path, serde_json::to_vec_pretty(&script).unwrap()).unwrap();
}
