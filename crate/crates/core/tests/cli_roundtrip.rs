//! End-to-end CLI behavior: artifact layout, exit codes, determinism, and
//! credential hygiene.

mod common;

use common::{offline_config, write_round_script, write_synthetic_csv};
use ragtopics::cli::dispatch;
use std::path::Path;

fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["ragtopics"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

struct Setup {
    _dir: tempfile::TempDir,
    config_path: std::path::PathBuf,
    artifacts: std::path::PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tweets.csv");
    let script = dir.path().join("script.json");
    let artifacts = dir.path().join("artifacts");
    write_synthetic_csv(&csv);
    write_round_script(&script);
    let config = offline_config(&csv, &script, &artifacts);
    let config_path = dir.path().join("config.json");
    config.save(&config_path).unwrap();
    Setup {
        _dir: dir,
        config_path,
        artifacts,
    }
}

fn single_run_dir(artifacts: &Path) -> std::path::PathBuf {
    let mut entries: Vec<_> = std::fs::read_dir(artifacts)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    assert_eq!(entries.len(), 1, "expected exactly one run dir");
    entries.pop().unwrap()
}

#[test]
fn unknown_flag_exits_two() {
    assert_eq!(run_cli(&["run", "--no-such-flag"]), 2);
}

#[test]
fn missing_csv_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = dir.path().join("artifacts");
    assert_eq!(
        run_cli(&["ingest", "--artifact-dir", artifacts.to_str().unwrap()]),
        1
    );
}

#[test]
fn ingest_writes_manifest() {
    let s = setup();
    assert_eq!(run_cli(&["ingest", "--config", s.config_path.to_str().unwrap()]), 0);
    let run_dir = single_run_dir(&s.artifacts);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["document_count"], 20);
    assert_eq!(manifest["chunk_count"], 20);
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 20);
}

#[test]
fn index_then_reuse_for_run() {
    let s = setup();
    assert_eq!(run_cli(&["index", "--config", s.config_path.to_str().unwrap()]), 0);
    let index_dir = single_run_dir(&s.artifacts);
    assert!(index_dir.join("index.bin").is_file());
    assert!(index_dir.join("chunks.json").is_file());

    assert_eq!(
        run_cli(&[
            "run",
            "--config",
            s.config_path.to_str().unwrap(),
            "--rounds",
            "1",
            "--index-from",
            index_dir.to_str().unwrap(),
        ]),
        0
    );
}

#[test]
fn run_refuses_index_built_under_different_model() {
    let s = setup();
    assert_eq!(run_cli(&["index", "--config", s.config_path.to_str().unwrap()]), 0);
    let index_dir = single_run_dir(&s.artifacts);

    // Same config except the index embedder identifies a different model.
    let mut mismatched = ragtopics::RunConfig::load(&s.config_path).unwrap();
    mismatched.index_embedder.model_name = "another-model".to_string();
    let bad_config = s.config_path.with_file_name("mismatched.json");
    mismatched.save(&bad_config).unwrap();

    assert_eq!(
        run_cli(&[
            "run",
            "--config",
            bad_config.to_str().unwrap(),
            "--rounds",
            "1",
            "--index-from",
            index_dir.to_str().unwrap(),
        ]),
        1
    );
}

#[test]
fn run_produces_complete_artifacts_and_report_renders_them() {
    let s = setup();
    assert_eq!(
        run_cli(&[
            "run",
            "--config",
            s.config_path.to_str().unwrap(),
            "--rounds",
            "2",
        ]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    assert!(run_dir.join("config.json").is_file());
    assert!(run_dir.join("manifest.json").is_file());
    assert!(run_dir.join("index.bin").is_file());
    assert!(run_dir.join("rounds/round-01.json").is_file());
    assert!(run_dir.join("rounds/round-02.json").is_file());
    assert!(run_dir.join("transcripts/round-01-a1.json").is_file());
    assert!(run_dir.join("transcripts/round-02-a1.json").is_file());

    assert_eq!(run_cli(&["report", "--run-dir", run_dir.to_str().unwrap()]), 0);
}

#[test]
fn run_twice_same_seed_is_byte_identical_modulo_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tweets.csv");
    let script = dir.path().join("script.json");
    write_synthetic_csv(&csv);
    write_round_script(&script);

    let mut run_dirs = Vec::new();
    for name in ["a", "b"] {
        let artifacts = dir.path().join(name);
        let config = offline_config(&csv, &script, &artifacts);
        let config_path = dir.path().join(format!("config-{name}.json"));
        config.save(&config_path).unwrap();
        assert_eq!(
            run_cli(&[
                "run",
                "--config",
                config_path.to_str().unwrap(),
                "--rounds",
                "2",
            ]),
            0
        );
        run_dirs.push(single_run_dir(&artifacts));
    }

    // Same semantic config means the same run id in both artifact roots.
    assert_eq!(
        run_dirs[0].file_name().unwrap(),
        run_dirs[1].file_name().unwrap()
    );

    for round in ["round-01.json", "round-02.json"] {
        let a = std::fs::read(run_dirs[0].join("rounds").join(round)).unwrap();
        let b = std::fs::read(run_dirs[1].join("rounds").join(round)).unwrap();
        assert_eq!(a, b, "round result {round} differs");
    }
    for transcript in ["round-01-a1.json", "round-02-a1.json"] {
        let a: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(run_dirs[0].join("transcripts").join(transcript)).unwrap(),
        )
        .unwrap();
        let b: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(run_dirs[1].join("transcripts").join(transcript)).unwrap(),
        )
        .unwrap();
        assert_eq!(a["transcript"], b["transcript"]);
        assert_eq!(a["envelope"]["run_id"], b["envelope"]["run_id"]);
        assert_eq!(a["envelope"]["config_hash"], b["envelope"]["config_hash"]);
    }

    // The index files are byte identical as well.
    let ia = std::fs::read(run_dirs[0].join("index.bin")).unwrap();
    let ib = std::fs::read(run_dirs[1].join("index.bin")).unwrap();
    assert_eq!(ia, ib);
}

#[test]
fn reliability_on_bundled_rounds_and_own_rounds_dir() {
    let s = setup();
    assert_eq!(
        run_cli(&[
            "eval",
            "reliability",
            "--config",
            s.config_path.to_str().unwrap(),
            "--bundled",
            "--full-matrix",
        ]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("reports/reliability.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["scores_vs_anchor"].as_array().unwrap().len(), 4);
    assert_eq!(report["anchor"], "agentic-rag-r1");
    let matrix = report["full_matrix"].as_array().unwrap();
    assert_eq!(matrix.len(), 5);
    assert!(run_dir.join("reports/reliability.csv").is_file());
}

#[test]
fn reliability_reads_fixture_files_from_a_directory() {
    let s = setup();
    // A directory of fixture-shaped files rather than round results.
    let fixtures_dir = s.config_path.parent().unwrap().join("fixture-rounds");
    std::fs::create_dir_all(&fixtures_dir).unwrap();
    for (i, labels) in [
        vec!["Vaccine Safety", "Side Effects"],
        vec!["Side Effects", "Vaccine Safety"],
        vec!["Trust Issues", "Vaccine Safety"],
    ]
    .iter()
    .enumerate()
    {
        let fixture = serde_json::json!({
            "method_name": format!("list-{i}"),
            "labels": labels,
        });
        std::fs::write(
            fixtures_dir.join(format!("list-{i}.json")),
            serde_json::to_vec_pretty(&fixture).unwrap(),
        )
        .unwrap();
    }
    assert_eq!(
        run_cli(&[
            "eval",
            "reliability",
            "--config",
            s.config_path.to_str().unwrap(),
            "--rounds-dir",
            fixtures_dir.to_str().unwrap(),
        ]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("reports/reliability.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["anchor"], "list-0");
    assert_eq!(report["scores_vs_anchor"].as_array().unwrap().len(), 2);
    // list-1 holds the same labels permuted, so it aligns perfectly.
    let perfect = report["scores_vs_anchor"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["other"] == "list-1")
        .unwrap();
    assert!((perfect["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn validity_and_compare_on_synthetic_corpus() {
    let s = setup();
    assert_eq!(
        run_cli(&[
            "eval",
            "validity",
            "--config",
            s.config_path.to_str().unwrap(),
            "--bundled",
            "agentic-rag-r1",
        ]),
        0
    );
    assert_eq!(
        run_cli(&["compare", "--config", s.config_path.to_str().unwrap()]),
        0
    );
    let mut dirs: Vec<_> = std::fs::read_dir(&s.artifacts)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    dirs.sort();
    let compare_dir = dirs.last().unwrap();
    let reports: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(compare_dir.join("reports/compare.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(compare_dir.join("reports/compare.csv")).unwrap();
    assert!(csv.starts_with("method,score,stderr\n"));
}

#[test]
fn validity_can_retrieve_in_index_space() {
    let s = setup();
    // Distinct index and eval embedders exercise the split-space path.
    let mut config = ragtopics::RunConfig::load(&s.config_path).unwrap();
    config.eval_embedder =
        ragtopics::EmbedderConfig::deterministic("eval-model", 48, 7);
    let cross_config = s.config_path.with_file_name("cross.json");
    config.save(&cross_config).unwrap();

    assert_eq!(
        run_cli(&[
            "eval",
            "validity",
            "--config",
            cross_config.to_str().unwrap(),
            "--bundled",
            "agentic-rag-r1",
            "--retrieve-in-index-space",
        ]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("reports/validity-agentic-rag-r1.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["retrieval_space"], "index");
    assert_eq!(report["eval_embedder"], "eval-model");
}

#[test]
fn lda_baseline_emits_scoreable_fixture() {
    let s = setup();
    // Tiny corpus: loosen the LDA config via a fresh config file.
    let mut config = ragtopics::RunConfig::load(&s.config_path).unwrap();
    config.lda.k = 2;
    config.lda.iterations = 50;
    config.lda.min_doc_freq = 2;
    let lda_config = s.config_path.with_file_name("lda-config.json");
    config.save(&lda_config).unwrap();

    assert_eq!(
        run_cli(&["baseline", "lda", "--config", lda_config.to_str().unwrap()]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    let fixture: ragtopics::Fixture = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("reports/lda-topics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(fixture.method_name, "lda-baseline");
    assert_eq!(fixture.labels.len(), 2);
    assert!(run_dir.join("reports/lda-model.json").is_file());
}

#[test]
fn failed_round_yields_partial_artifacts_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tweets.csv");
    let script = dir.path().join("script.json");
    let artifacts = dir.path().join("artifacts");
    write_synthetic_csv(&csv);
    // Script holds only one round's worth of completions; round 2 exhausts it.
    write_round_script(&script);
    let mut config = offline_config(&csv, &script, &artifacts);
    // Each round re-reads the script, so exhaust it instead via zero entries.
    std::fs::write(&script, "[]").unwrap();
    config.artifact_dir = artifacts.clone();
    let config_path = dir.path().join("config.json");
    config.save(&config_path).unwrap();

    assert_eq!(
        run_cli(&["run", "--config", config_path.to_str().unwrap(), "--rounds", "1"]),
        1
    );
    let run_dir = single_run_dir(&artifacts);
    assert!(run_dir.join("rounds/round-01.failed.json").is_file());
}

#[test]
fn no_credential_material_in_artifacts() {
    // SAFETY: single-threaded set of a test-only variable.
    unsafe { std::env::set_var("RAGTOPICS_FAKE_SECRET", "sk-super-secret-value-9137") };
    let s = setup();
    assert_eq!(
        run_cli(&[
            "run",
            "--config",
            s.config_path.to_str().unwrap(),
            "--rounds",
            "1",
        ]),
        0
    );
    let run_dir = single_run_dir(&s.artifacts);
    let mut stack = vec![run_dir];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                let text = String::from_utf8_lossy(&bytes);
                assert!(
                    !text.contains("sk-super-secret-value-9137"),
                    "secret leaked into {}",
                    path.display()
                );
            }
        }
    }
}
