//! Command-line entry point.
//!
//! Every subcommand writes its outputs under `<artifact_dir>/<run_id>/` and
//! prints one machine-parsable `RESULT key=value ...` line last. Exit codes:
//! 0 success, 2 usage error, 1 runtime failure (with the failing stage named
//! in the summary line).

use crate::agent::PersistedTranscript;
use crate::config::{LlmBackendConfig, RunConfig};
use crate::corpus::{self, Chunk, IngestOptions, Manifest};
use crate::embedding::build_embedder;
use crate::evaluation::{self, Fixture};
use crate::lda;
use crate::llm::{ChatClient, HttpChatClient, ScriptedClient};
use crate::topicmodel::{RoundContext, RoundResult};
use crate::vectorstore::IndexedCorpus;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "ragtopics", version, about = "Agentic-RAG topic modeling engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Path to a JSON run-configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the corpus CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the CSV text column name.
    #[arg(long)]
    text_column: Option<String>,
    /// Collapse exact-duplicate texts at ingestion.
    #[arg(long)]
    dedup: bool,
    /// Skip malformed CSV rows instead of failing fast.
    #[arg(long)]
    skip_malformed: bool,
    /// Override the artifact directory.
    #[arg(long)]
    artifact_dir: Option<PathBuf>,
    /// Override the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the corpus CSV and write the manifest.
    Ingest(CommonArgs),
    /// Embed the chunked corpus and persist the vector index.
    Index(CommonArgs),
    /// Run agent topic-extraction rounds.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of rounds (overrides the config).
        #[arg(long)]
        rounds: Option<usize>,
        /// Reuse a persisted index from a previous run directory.
        #[arg(long)]
        index_from: Option<PathBuf>,
    },
    /// Score topic lists with the quality metrics.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// Traditional baselines.
    Baseline {
        #[command(subcommand)]
        which: BaselineCommand,
    },
    /// Score several topic lists against the same corpus and rank them.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixture files ({method_name, labels}); defaults to the bundled lists.
        #[arg(long, num_args = 1..)]
        fixtures: Vec<PathBuf>,
        /// Also score rounds found in this directory.
        #[arg(long)]
        rounds_dir: Option<PathBuf>,
        /// Reuse a persisted index from a previous run directory.
        #[arg(long)]
        index_from: Option<PathBuf>,
        /// Retrieve in the index embedding space and score in the eval space.
        #[arg(long)]
        retrieve_in_index_space: bool,
    },
    /// Render a previous run directory.
    Report {
        /// The run directory to render.
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Weighted reverse-retrieval relevance of one topic list.
    Validity {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixture file with the topic list to score.
        #[arg(long, required_unless_present = "bundled")]
        topics: Option<PathBuf>,
        /// Use a bundled fixture by method name instead of a file.
        #[arg(long)]
        bundled: Option<String>,
        /// Reuse a persisted index from a previous run directory.
        #[arg(long)]
        index_from: Option<PathBuf>,
        /// Retrieve in the index embedding space and score in the eval space,
        /// instead of re-embedding the corpus with the eval model.
        #[arg(long)]
        retrieve_in_index_space: bool,
    },
    /// Cross-round max-similarity consistency.
    Reliability {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of round results or fixture files.
        #[arg(long, required_unless_present = "bundled")]
        rounds_dir: Option<PathBuf>,
        /// Use the five bundled rounds.
        #[arg(long)]
        bundled: bool,
        /// 1-based anchor round (default 1).
        #[arg(long, default_value_t = 1)]
        anchor: usize,
        /// Also compute the full pairwise matrix.
        #[arg(long)]
        full_matrix: bool,
    },
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// Fit the collapsed-Gibbs LDA baseline and emit its topic labels.
    Lda(CommonArgs),
}

/// A runtime failure with the stage that produced it.
struct Failure {
    stage: &'static str,
    message: String,
}

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage,
            message: e.to_string(),
        })
    }
}

pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };

    let (name, outcome) = match cli.command {
        Command::Ingest(common) => ("ingest", cmd_ingest(common)),
        Command::Index(common) => ("index", cmd_index(common)),
        Command::Run {
            common,
            rounds,
            index_from,
        } => ("run", cmd_run(common, rounds, index_from.as_deref())),
        Command::Eval { which } => match which {
            EvalCommand::Validity {
                common,
                topics,
                bundled,
                index_from,
                retrieve_in_index_space,
            } => (
                "eval-validity",
                cmd_validity(
                    common,
                    topics.as_deref(),
                    bundled.as_deref(),
                    index_from.as_deref(),
                    retrieve_in_index_space,
                ),
            ),
            EvalCommand::Reliability {
                common,
                rounds_dir,
                bundled,
                anchor,
                full_matrix,
            } => (
                "eval-reliability",
                cmd_reliability(common, rounds_dir.as_deref(), bundled, anchor, full_matrix),
            ),
        },
        Command::Baseline { which } => match which {
            BaselineCommand::Lda(common) => ("baseline-lda", cmd_lda(common)),
        },
        Command::Compare {
            common,
            fixtures,
            rounds_dir,
            index_from,
            retrieve_in_index_space,
        } => (
            "compare",
            cmd_compare(
                common,
                &fixtures,
                rounds_dir.as_deref(),
                index_from.as_deref(),
                retrieve_in_index_space,
            ),
        ),
        Command::Report { run_dir } => ("report", cmd_report(&run_dir)),
    };

    match outcome {
        Ok(fields) => {
            print_summary(name, "ok", None, &fields);
            0
        }
        Err(failure) => {
            print_summary(
                name,
                "error",
                Some(failure.stage),
                &[("error".to_string(), failure.message)],
            );
            1
        }
    }
}

fn print_summary(
    subcommand: &str,
    status: &str,
    stage: Option<&str>,
    fields: &[(String, String)],
) {
    let mut line = format!("RESULT subcommand={subcommand} status={status}");
    if let Some(stage) = stage {
        line.push_str(&format!(" stage={stage}"));
    }
    for (key, value) in fields {
        let flat = value.replace('\n', " ");
        if flat.contains(' ') {
            line.push_str(&format!(" {key}=\"{flat}\""));
        } else {
            line.push_str(&format!(" {key}={flat}"));
        }
    }
    println!("{line}");
}

type Fields = Vec<(String, String)>;

fn field(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).stage("config")?,
        None => RunConfig::default(),
    };
    if let Some(csv) = &common.csv {
        config.corpus.csv_path = Some(csv.clone());
    }
    if let Some(column) = &common.text_column {
        config.corpus.text_column = column.clone();
    }
    if common.dedup {
        config.corpus.dedup = true;
    }
    if common.skip_malformed {
        config.corpus.skip_malformed = true;
    }
    if let Some(dir) = &common.artifact_dir {
        config.artifact_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Allocates `<artifact_dir>/<hash12>-<counter>` and writes the config snapshot.
fn prepare_run_dir(config: &RunConfig) -> Result<(String, PathBuf), Failure> {
    let hash = config.hash();
    let prefix = &hash[..12];
    std::fs::create_dir_all(&config.artifact_dir).stage("artifacts")?;
    let mut counter = 0usize;
    loop {
        let run_id = format!("{prefix}-{counter:03}");
        let dir = config.artifact_dir.join(&run_id);
        if !dir.exists() {
            std::fs::create_dir_all(&dir).stage("artifacts")?;
            config.save(&dir.join("config.json")).stage("artifacts")?;
            return Ok((run_id, dir));
        }
        counter += 1;
    }
}

fn build_corpus(config: &RunConfig) -> Result<(Vec<Chunk>, Manifest), Failure> {
    let csv_path = config
        .corpus
        .csv_path
        .as_deref()
        .ok_or(Failure {
            stage: "ingest",
            message: "no corpus CSV configured; set corpus.csv_path or pass --csv".to_string(),
        })?;
    let ingested = corpus::ingest_csv(
        csv_path,
        &config.corpus.text_column,
        IngestOptions {
            dedup: config.corpus.dedup,
            skip_malformed: config.corpus.skip_malformed,
        },
    )
    .stage("ingest")?;
    let (chunks, manifest) =
        corpus::chunk_corpus(&ingested, &config.corpus.text_column, &config.chunking);
    Ok((chunks, manifest))
}

fn build_index(config: &RunConfig, chunks: &[Chunk]) -> Result<IndexedCorpus, Failure> {
    let embedder = build_embedder(&config.index_embedder);
    let pairs: Vec<(String, String)> = chunks
        .iter()
        .map(|c| (c.chunk_id.clone(), c.text.clone()))
        .collect();
    IndexedCorpus::build(pairs, embedder.as_ref()).stage("index")
}

/// Loads a persisted index for retrieval. The recorded embedder model must
/// match the run configuration exactly.
fn load_index_checked(dir: &Path, config: &RunConfig) -> Result<IndexedCorpus, Failure> {
    let corpus = IndexedCorpus::load(dir).stage("index")?;
    corpus
        .store
        .verify_model(&config.index_embedder.model_name)
        .stage("index")?;
    Ok(corpus)
}

fn obtain_index(
    config: &RunConfig,
    index_from: Option<&Path>,
    verify: bool,
) -> Result<(IndexedCorpus, Option<Manifest>), Failure> {
    match index_from {
        Some(dir) => {
            let corpus = if verify {
                load_index_checked(dir, config)?
            } else {
                IndexedCorpus::load(dir).stage("index")?
            };
            Ok((corpus, None))
        }
        None => {
            let (chunks, manifest) = build_corpus(config)?;
            let index = build_index(config, &chunks)?;
            Ok((index, Some(manifest)))
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize, stage: &'static str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).stage(stage)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value).expect("serializable"))
        .stage(stage)
}

fn make_client_factory(
    config: &RunConfig,
) -> Result<Box<dyn FnMut() -> Box<dyn ChatClient>>, Failure> {
    match &config.llm.backend {
        LlmBackendConfig::Scripted { script_path } => {
            let raw = std::fs::read_to_string(script_path).stage("llm")?;
            let script: Vec<String> = serde_json::from_str(&raw).stage("llm")?;
            Ok(Box::new(move || {
                Box::new(ScriptedClient::new(script.clone())) as Box<dyn ChatClient>
            }))
        }
        LlmBackendConfig::RemoteHttp {
            base_url,
            api_key_env,
        } => {
            let base_url = base_url.clone();
            let api_key_env = api_key_env.clone();
            let retry = config.llm.retry.clone();
            Ok(Box::new(move || {
                Box::new(HttpChatClient::new(
                    &base_url,
                    api_key_env.as_deref(),
                    retry.clone(),
                )) as Box<dyn ChatClient>
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_ingest(common: CommonArgs) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let (run_id, dir) = prepare_run_dir(&config)?;
    let (chunks, manifest) = build_corpus(&config)?;
    write_json(&dir.join("manifest.json"), &manifest, "manifest")?;
    println!(
        "ingested {} documents into {} chunks ({} duplicates collapsed, {} empty rows, {} malformed rows skipped)",
        manifest.document_count,
        chunks.len(),
        manifest.duplicates_collapsed,
        manifest.empty_rows_skipped,
        manifest.malformed_rows_skipped
    );
    Ok(vec![
        field("run_id", &run_id),
        field("documents", manifest.document_count),
        field("chunks", chunks.len()),
        field("duplicates_collapsed", manifest.duplicates_collapsed),
        field("artifact_dir", dir.display()),
    ])
}

fn cmd_index(common: CommonArgs) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let (run_id, dir) = prepare_run_dir(&config)?;
    let (chunks, manifest) = build_corpus(&config)?;
    write_json(&dir.join("manifest.json"), &manifest, "manifest")?;
    let index = build_index(&config, &chunks)?;
    index.save(&dir).stage("index")?;
    println!(
        "indexed {} chunks at dim {} with model {}",
        index.store.len(),
        index.store.dim(),
        index.store.model_name()
    );
    Ok(vec![
        field("run_id", &run_id),
        field("records", index.store.len()),
        field("dim", index.store.dim()),
        field("model", index.store.model_name()),
        field("artifact_dir", dir.display()),
    ])
}

fn cmd_run(
    common: CommonArgs,
    rounds: Option<usize>,
    index_from: Option<&Path>,
) -> Result<Fields, Failure> {
    let mut config = load_config(&common)?;
    if let Some(n) = rounds {
        config.topics.rounds = n;
    }
    let (run_id, dir) = prepare_run_dir(&config)?;
    let (index, manifest) = obtain_index(&config, index_from, true)?;
    if let Some(manifest) = &manifest {
        write_json(&dir.join("manifest.json"), manifest, "manifest")?;
    }
    index.save(&dir).stage("index")?;

    let embedder: Arc<dyn crate::embedding::Embedder> =
        Arc::from(build_embedder(&config.index_embedder));
    let ctx = RoundContext {
        corpus: Arc::new(index),
        embedder,
        llm_params: config.llm.params.clone(),
        topic_params: config.topics.clone(),
        agent_limits: config.agent.limits,
        retriever_k: config.agent.retriever_k,
        config_snapshot: config.snapshot(),
        config_hash: config.hash(),
    };
    let mut make_client = make_client_factory(&config)?;
    let runs = crate::topicmodel::run_rounds(
        &ctx,
        move || make_client(),
        config.topics.rounds,
        Some(&dir),
    )
    .stage("rounds")?;

    let ok = runs.iter().filter(|r| r.result.is_ok()).count();
    let failed = runs.len() - ok;
    for run in &runs {
        match &run.result {
            Ok(result) => {
                println!("round {:02}:", run.round_number);
                for topic in &result.topics {
                    let marker = if topic.violates_word_limit { " [over word limit]" } else { "" };
                    println!("  Topic {}: {}{}", topic.index, topic.label, marker);
                }
            }
            Err(failure) => println!("round {:02}: FAILED: {failure}", run.round_number),
        }
    }

    let fields = vec![
        field("run_id", &run_id),
        field("rounds_ok", ok),
        field("rounds_failed", failed),
        field("artifact_dir", dir.display()),
    ];
    if failed > 0 {
        return Err(Failure {
            stage: "rounds",
            message: format!("{failed} of {} rounds failed (artifacts in {})", runs.len(), dir.display()),
        });
    }
    Ok(fields)
}

fn resolve_fixture(
    topics: Option<&Path>,
    bundled: Option<&str>,
) -> Result<Fixture, Failure> {
    match (topics, bundled) {
        (Some(path), _) => Fixture::load(path).stage("fixtures"),
        (None, Some(name)) => evaluation::bundled_rounds()
            .into_iter()
            .chain(evaluation::bundled_comparison())
            .find(|f| f.method_name == name)
            .ok_or(Failure {
                stage: "fixtures",
                message: format!("no bundled fixture named '{name}'"),
            }),
        (None, None) => Err(Failure {
            stage: "fixtures",
            message: "pass --topics FILE or --bundled NAME".to_string(),
        }),
    }
}

fn cmd_validity(
    common: CommonArgs,
    topics: Option<&Path>,
    bundled: Option<&str>,
    index_from: Option<&Path>,
    retrieve_in_index_space: bool,
) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let fixture = resolve_fixture(topics, bundled)?;
    let (run_id, dir) = prepare_run_dir(&config)?;
    let (index, _) = obtain_index(&config, index_from, false)?;
    let eval_embedder = build_embedder(&config.eval_embedder);
    let report = if retrieve_in_index_space {
        let index_embedder = build_embedder(&config.index_embedder);
        evaluation::validity_cross_space(
            &fixture.method_name,
            &fixture.labels,
            &index,
            index_embedder.as_ref(),
            eval_embedder.as_ref(),
            &config.eval,
        )
    } else {
        evaluation::validity(
            &fixture.method_name,
            &fixture.labels,
            &index,
            eval_embedder.as_ref(),
            &config.eval,
        )
    }
    .stage("validity")?;

    let report_path = dir
        .join("reports")
        .join(format!("validity-{}.json", report.method_name));
    write_json(&report_path, &report, "reports")?;
    std::fs::write(
        dir.join("reports").join(format!("validity-{}.csv", report.method_name)),
        evaluation::validity_csv(std::slice::from_ref(&report)),
    )
    .stage("reports")?;

    println!(
        "validity[{}] = {:.2} (stderr {:.2}) over {} topics, eval model {}",
        report.method_name,
        report.weighted_score,
        report.weighted_stderr,
        report.per_topic.len(),
        report.eval_embedder
    );
    for topic in &report.per_topic {
        println!(
            "  {:<32} retrieved={:<4} mean_sim={:.4}{}",
            topic.label,
            topic.retrieved_count,
            topic.mean_similarity,
            if topic.zero_retrieval { " [zero retrieval]" } else { "" }
        );
    }
    Ok(vec![
        field("run_id", &run_id),
        field("method", &report.method_name),
        field("score", format!("{:.6}", report.weighted_score)),
        field("stderr", format!("{:.6}", report.weighted_stderr)),
        field("reembedded", report.reembedded_with_eval),
        field("artifact_dir", dir.display()),
    ])
}

/// Reads round results and fixture files from a directory, sorted by name.
fn load_round_lists(dir: &Path) -> Result<Vec<(String, Vec<String>)>, Failure> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .stage("rounds")?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    entries.sort();
    let mut rounds = Vec::new();
    for path in entries {
        let raw = std::fs::read_to_string(&path).stage("rounds")?;
        let value: serde_json::Value = match serde_json::from_str(&raw) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if value.get("failed").and_then(serde_json::Value::as_bool) == Some(true) {
            continue;
        }
        if let Ok(result) = serde_json::from_value::<RoundResult>(value.clone()) {
            rounds.push((format!("round-{:02}", result.round_number), result.labels()));
        } else if let Ok(fixture) = serde_json::from_value::<Fixture>(value) {
            rounds.push((fixture.method_name, fixture.labels));
        }
    }
    if rounds.is_empty() {
        return Err(Failure {
            stage: "rounds",
            message: format!("no round results or fixtures found in {}", dir.display()),
        });
    }
    Ok(rounds)
}

fn cmd_reliability(
    common: CommonArgs,
    rounds_dir: Option<&Path>,
    bundled: bool,
    anchor: usize,
    full_matrix: bool,
) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let rounds: Vec<(String, Vec<String>)> = if bundled {
        evaluation::bundled_rounds()
            .into_iter()
            .map(|f| (f.method_name, f.labels))
            .collect()
    } else {
        load_round_lists(rounds_dir.expect("clap enforces rounds_dir without --bundled"))?
    };
    if anchor == 0 || anchor > rounds.len() {
        return Err(Failure {
            stage: "reliability",
            message: format!("--anchor must be in 1..={}", rounds.len()),
        });
    }

    let (run_id, dir) = prepare_run_dir(&config)?;
    let eval_embedder = build_embedder(&config.eval_embedder);
    let report = evaluation::reliability(&rounds, eval_embedder.as_ref(), anchor - 1, full_matrix)
        .stage("reliability")?;

    write_json(&dir.join("reports").join("reliability.json"), &report, "reports")?;
    std::fs::write(
        dir.join("reports").join("reliability.csv"),
        evaluation::reliability_csv(&report),
    )
    .stage("reports")?;

    println!("reliability vs anchor {} (eval model {}):", report.anchor, report.eval_embedder);
    for pair in &report.scores_vs_anchor {
        println!("  {} -> {}: {:.2}", pair.anchor, pair.other, pair.score);
    }
    Ok(vec![
        field("run_id", &run_id),
        field("anchor", &report.anchor),
        field("pairs", report.scores_vs_anchor.len()),
        field("artifact_dir", dir.display()),
    ])
}

fn cmd_lda(common: CommonArgs) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let (run_id, dir) = prepare_run_dir(&config)?;
    let csv_path = config.corpus.csv_path.as_deref().ok_or(Failure {
        stage: "ingest",
        message: "no corpus CSV configured; set corpus.csv_path or pass --csv".to_string(),
    })?;
    let ingested = corpus::ingest_csv(
        csv_path,
        &config.corpus.text_column,
        IngestOptions {
            dedup: config.corpus.dedup,
            skip_malformed: config.corpus.skip_malformed,
        },
    )
    .stage("ingest")?;
    let texts: Vec<String> = ingested.documents.iter().map(|d| d.text.clone()).collect();
    let tokenized = lda::preprocess(
        &texts,
        &lda::PreprocessOptions {
            stem: config.lda.stem,
            min_token_len: config.lda.min_token_len,
            min_doc_freq: config.lda.min_doc_freq,
        },
    )
    .stage("preprocess")?;
    let model = lda::fit_gibbs(
        &tokenized,
        config.lda.k,
        config.lda.effective_alpha(),
        config.lda.beta,
        config.lda.iterations,
        config.seed,
    );
    let topics = lda::topic_labels(&model, config.lda.label_words);
    let fixture = Fixture {
        method_name: "lda-baseline".to_string(),
        labels: topics.iter().map(|t| t.label.clone()).collect(),
    };

    write_json(&dir.join("reports").join("lda-model.json"), &model, "reports")?;
    write_json(&dir.join("reports").join("lda-topics.json"), &fixture, "reports")?;

    println!(
        "lda baseline: {} topics over vocabulary of {} ({} iterations, alpha {:.3}, beta {})",
        model.k,
        model.vocab.len(),
        model.iterations,
        model.alpha,
        model.beta
    );
    for topic in &topics {
        println!("  Topic {}: {}", topic.index, topic.label);
    }
    Ok(vec![
        field("run_id", &run_id),
        field("topics", model.k),
        field("vocab", model.vocab.len()),
        field("artifact_dir", dir.display()),
    ])
}

fn cmd_compare(
    common: CommonArgs,
    fixture_paths: &[PathBuf],
    rounds_dir: Option<&Path>,
    index_from: Option<&Path>,
    retrieve_in_index_space: bool,
) -> Result<Fields, Failure> {
    let config = load_config(&common)?;
    let mut fixtures: Vec<Fixture> = if fixture_paths.is_empty() {
        evaluation::bundled_comparison()
    } else {
        fixture_paths
            .iter()
            .map(|p| Fixture::load(p).stage("fixtures"))
            .collect::<Result<_, _>>()?
    };
    if let Some(dir) = rounds_dir {
        for (name, labels) in load_round_lists(dir)? {
            fixtures.push(Fixture {
                method_name: name,
                labels,
            });
        }
    }

    let (run_id, dir) = prepare_run_dir(&config)?;
    let (index, _) = obtain_index(&config, index_from, false)?;
    let eval_embedder = build_embedder(&config.eval_embedder);
    let reports = if retrieve_in_index_space {
        let index_embedder = build_embedder(&config.index_embedder);
        evaluation::compare_methods_cross_space(
            &fixtures,
            &index,
            index_embedder.as_ref(),
            eval_embedder.as_ref(),
            &config.eval,
        )
    } else {
        evaluation::compare_methods(&fixtures, &index, eval_embedder.as_ref(), &config.eval)
    }
    .stage("compare")?;

    write_json(&dir.join("reports").join("compare.json"), &reports, "reports")?;
    std::fs::write(
        dir.join("reports").join("compare.csv"),
        evaluation::validity_csv(&reports),
    )
    .stage("reports")?;

    println!("{:<24} {:>8} {:>8}", "method", "score", "stderr");
    for report in &reports {
        println!(
            "{:<24} {:>8.2} {:>8.2}",
            report.method_name, report.weighted_score, report.weighted_stderr
        );
    }
    Ok(vec![
        field("run_id", &run_id),
        field("methods", reports.len()),
        field(
            "best",
            reports
                .first()
                .map(|r| r.method_name.clone())
                .unwrap_or_default(),
        ),
        field("artifact_dir", dir.display()),
    ])
}

fn cmd_report(run_dir: &Path) -> Result<Fields, Failure> {
    if !run_dir.is_dir() {
        return Err(Failure {
            stage: "report",
            message: format!("{} is not a directory", run_dir.display()),
        });
    }
    println!("run directory {}", run_dir.display());

    if let Ok(raw) = std::fs::read_to_string(run_dir.join("config.json")) {
        if let Ok(config) = serde_json::from_str::<RunConfig>(&raw) {
            println!("config hash {}", config.hash());
        }
    }
    if let Ok(raw) = std::fs::read_to_string(run_dir.join("manifest.json")) {
        if let Ok(manifest) = serde_json::from_str::<Manifest>(&raw) {
            println!(
                "manifest: {} documents, {} chunks",
                manifest.document_count, manifest.chunk_count
            );
        }
    }

    let mut rounds_ok = 0usize;
    let mut rounds_failed = 0usize;
    let rounds_dir = run_dir.join("rounds");
    if rounds_dir.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&rounds_dir)
            .stage("report")?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            let raw = std::fs::read_to_string(&path).stage("report")?;
            if let Ok(result) = serde_json::from_str::<RoundResult>(&raw) {
                rounds_ok += 1;
                println!(
                    "round {:02} ({}):",
                    result.round_number, result.transcript_ref
                );
                for topic in &result.topics {
                    println!("  Topic {}: {}", topic.index, topic.label);
                }
            } else {
                rounds_failed += 1;
                println!("failed round marker: {}", path.display());
            }
        }
    }

    let transcripts_dir = run_dir.join("transcripts");
    let mut transcripts = 0usize;
    if transcripts_dir.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&transcripts_dir)
            .stage("report")?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            if let Ok(persisted) = PersistedTranscript::load(&path) {
                transcripts += 1;
                println!(
                    "transcript {} outcome {:?} steps {}",
                    persisted.envelope.run_id,
                    persisted.transcript.outcome,
                    persisted.transcript.steps.len()
                );
            }
        }
    }

    let reports_dir = run_dir.join("reports");
    if reports_dir.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&reports_dir)
            .stage("report")?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            println!("report file {}", path.display());
        }
    }

    Ok(vec![
        field("run_dir", run_dir.display()),
        field("rounds_ok", rounds_ok),
        field("rounds_failed", rounds_failed),
        field("transcripts", transcripts),
    ])
}
