//! The classify pipeline: chunk per plan, prompt per template (with a
//! retrieval block when a lexicon is configured), send to the endpoint,
//! parse, aggregate per decision rule, and write run artifacts.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use lexiclass_core::chunker::{chunk, summarize_extractive, ChunkStrategy};
use lexiclass_core::corpus::{Corpus, Document, LabelOntology};
use lexiclass_core::decision::{decide, ChunkPrediction, DocumentDecision};
use lexiclass_core::llmclient::{classify_batch, BatchJob, CompletionExchange, EndpointConfig};
use lexiclass_core::mock::{MockOptions, MockServer};
use lexiclass_core::promptkit::{
    build_prompt, parse_response, select_fewshot, ParseMethod, PromptTemplate,
};
use lexiclass_core::retrieval::{load_lexicon, retrieve_and_prompt};

use crate::config::{resolved_snapshot, RunConfig};
use crate::{CliError, CliResult};

/// Per-chunk prediction record as written to predictions.jsonl.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub ordinal: usize,
    pub label: Option<usize>,
    pub confidence: Option<f64>,
    pub abstained: bool,
    pub raw: String,
    pub method: Option<ParseMethod>,
    pub error: Option<String>,
}

pub struct ClassifyOutcome {
    pub run_dir: PathBuf,
    pub decisions: Vec<DocumentDecision>,
    pub documents: usize,
    pub exchanges: usize,
    pub abstained_documents: usize,
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let mut file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for item in items {
        writeln!(file, "{}", serde_json::to_string(item).expect("serializable"))?;
    }
    Ok(())
}

fn load_run_corpus(config: &RunConfig) -> CliResult<(Corpus, LabelOntology)> {
    let ontology = LabelOntology::from_json_file(&config.ontology)
        .map_err(|e| CliError::usage(format!("ontology: {e}")))?;
    let corpus = Corpus::load(&config.corpus, config.format)
        .map_err(|e| CliError::usage(format!("corpus: {e}")))?;
    corpus
        .validate_labels(config.level, &ontology)
        .map_err(|e| CliError::usage(format!("corpus labels: {e}")))?;
    let corpus = match &config.ids_file {
        None => corpus,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let wanted: HashSet<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let docs: Vec<Document> = corpus
                .docs()
                .iter()
                .filter(|d| wanted.contains(d.doc_id.as_str()))
                .cloned()
                .collect();
            Corpus::new(docs).expect("filtered corpus keeps invariants")
        }
    };
    if corpus.is_empty() {
        return Err(CliError::usage("no documents selected for this run"));
    }
    Ok((corpus, ontology))
}

fn endpoint_config(config: &RunConfig, mock: Option<&MockServer>) -> EndpointConfig {
    let base_url = match mock {
        Some(server) => server.base_url(),
        None => config.base_url.clone().expect("validated"),
    };
    let mut endpoint = EndpointConfig::new(&base_url, &config.model);
    endpoint.temperature = config.temperature;
    endpoint.max_tokens = config.max_tokens;
    endpoint.timeout = Duration::from_millis(config.timeout_ms);
    endpoint.max_retries = config.max_retries;
    endpoint.backoff_base = Duration::from_millis(config.backoff_ms);
    endpoint.parallelism = config.parallelism;
    endpoint.api_key_env = config.api_key_env.clone();
    endpoint.loopback_only = mock.is_some();
    endpoint
}

pub fn run_classify(config: &RunConfig) -> CliResult<ClassifyOutcome> {
    let (corpus, ontology) = load_run_corpus(config)?;
    let mut template = PromptTemplate::from_file(&config.template)
        .map_err(|e| CliError::usage(format!("template: {e}")))?;
    if let Some(budget) = config.excerpt_budget {
        if budget == 0 {
            return Err(CliError::usage("excerpt_budget must be > 0"));
        }
        template.excerpt_budget = budget;
    }
    if config.fewshot_k > 0 {
        let fewshot = select_fewshot(
            &corpus,
            config.level,
            config.fewshot_k,
            config.fewshot_seed,
            config.fewshot_cap,
            template.excerpt_budget,
        )
        .map_err(|e| CliError::usage(format!("fewshot: {e}")))?;
        template = template.with_fewshot(fewshot);
    }
    let lexicon = match &config.lexicon {
        None => None,
        Some(path) => Some(
            load_lexicon(path, &ontology)
                .map_err(|e| CliError::usage(format!("lexicon: {e}")))?,
        ),
    };
    if lexicon.is_some() && !template.uses_retrieved_block() {
        return Err(CliError::usage(
            "a lexicon is configured but the template has no {retrieved_block} placeholder",
        ));
    }
    let plan = config.plan();

    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating run dir {}", run_dir.display()))?;

    let mock = match config.mock_mode() {
        false => None,
        true => {
            let rules = match &config.mock_fixture {
                Some(path) => lexiclass_core::mock::load_fixture(path)
                    .map_err(|e| CliError::usage(format!("mock fixture: {e}")))?,
                None => Vec::new(),
            };
            let options = MockOptions {
                port: 0,
                default_response: config.mock_default.clone(),
                log_path: Some(run_dir.join("mock_log.jsonl")),
            };
            Some(MockServer::start(rules, options).map_err(|e| CliError::Runtime(e.into()))?)
        }
    };
    let endpoint = endpoint_config(config, mock.as_ref());

    // Build one prompt job per unit (chunk, summary, or retrieval-augmented
    // whole document). Prompt-build failures become immediate abstentions.
    let mut jobs: Vec<BatchJob> = Vec::new();
    let mut job_origin: Vec<(usize, usize)> = Vec::new(); // (doc index, ordinal)
    let mut failed: Vec<PredictionRecord> = Vec::new();
    for (doc_index, doc) in corpus.docs().iter().enumerate() {
        let units: Result<Vec<(usize, String, String)>, String> = (|| {
            if let Some(lexicon) = &lexicon {
                let (system, user) =
                    retrieve_and_prompt(doc, lexicon, config.retrieval_k, &template, &ontology)
                        .map_err(|e| e.to_string())?;
                return Ok(vec![(0, system, user)]);
            }
            match plan.strategy {
                ChunkStrategy::Summarize => {
                    let summary = summarize_extractive(doc, plan.budget).map_err(|e| e.to_string())?;
                    let (system, user) = build_prompt(&template, &ontology, &summary.text, &plan)
                        .map_err(|e| e.to_string())?;
                    Ok(vec![(0, system, user)])
                }
                _ => {
                    let chunks = chunk(doc, &plan).map_err(|e| e.to_string())?;
                    chunks
                        .iter()
                        .map(|c| {
                            build_prompt(&template, &ontology, &c.text, &plan)
                                .map(|(system, user)| (c.ordinal, system, user))
                                .map_err(|e| e.to_string())
                        })
                        .collect()
                }
            }
        })();
        match units {
            Ok(units) => {
                for (ordinal, system, user) in units {
                    jobs.push(BatchJob {
                        id: format!("{}#{}", doc.doc_id, ordinal),
                        system,
                        user,
                    });
                    job_origin.push((doc_index, ordinal));
                }
            }
            Err(message) => failed.push(PredictionRecord {
                doc_id: doc.doc_id.clone(),
                ordinal: 0,
                label: None,
                confidence: None,
                abstained: true,
                raw: String::new(),
                method: None,
                error: Some(message),
            }),
        }
    }

    let exchanges: Vec<CompletionExchange> = if jobs.is_empty() {
        Vec::new()
    } else {
        classify_batch(&endpoint, jobs).map_err(|e| CliError::Runtime(e.into()))?
    };

    // Parse responses into per-chunk predictions, in corpus order.
    let mut records: Vec<PredictionRecord> = failed;
    for (exchange, (doc_index, ordinal)) in exchanges.iter().zip(&job_origin) {
        let doc_id = corpus.docs()[*doc_index].doc_id.clone();
        let record = match &exchange.endpoint_error {
            Some(error) => PredictionRecord {
                doc_id,
                ordinal: *ordinal,
                label: None,
                confidence: None,
                abstained: true,
                raw: exchange.response_text.clone(),
                method: None,
                error: Some(error.clone()),
            },
            None => match parse_response(&exchange.response_text, &ontology, template.answer_format)
            {
                Ok(parsed) => PredictionRecord {
                    doc_id,
                    ordinal: *ordinal,
                    label: Some(parsed.label),
                    confidence: None,
                    abstained: false,
                    raw: exchange.response_text.clone(),
                    method: Some(parsed.method),
                    error: None,
                },
                Err(parse_error) => PredictionRecord {
                    doc_id,
                    ordinal: *ordinal,
                    label: None,
                    confidence: None,
                    abstained: true,
                    raw: exchange.response_text.clone(),
                    method: None,
                    error: Some(parse_error.to_string()),
                },
            },
        };
        records.push(record);
    }
    records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.ordinal.cmp(&b.ordinal)));

    // Aggregate per document, in corpus order.
    let mut by_doc: std::collections::HashMap<&str, Vec<ChunkPrediction>> =
        std::collections::HashMap::with_capacity(corpus.len());
    for r in &records {
        by_doc
            .entry(r.doc_id.as_str())
            .or_default()
            .push(ChunkPrediction {
                doc_id: r.doc_id.clone(),
                chunk_ordinal: r.ordinal,
                label: r.label,
                confidence: r.confidence,
                abstained: r.abstained,
            });
    }
    let mut decisions: Vec<DocumentDecision> = Vec::with_capacity(corpus.len());
    for doc in corpus.docs() {
        let preds = by_doc.remove(doc.doc_id.as_str()).unwrap_or_default();
        let decision = decide(config.rule, &preds).map_err(|e| CliError::Runtime(e.into()))?;
        decisions.push(decision);
    }
    let abstained_documents = decisions.iter().filter(|d| d.abstained).count();

    // Artifacts.
    write_jsonl(&run_dir.join("predictions.jsonl"), &records)?;
    write_jsonl(&run_dir.join("decisions.jsonl"), &decisions)?;
    write_jsonl(&run_dir.join("exchanges.jsonl"), &exchanges)?;
    std::fs::write(run_dir.join("config.resolved.txt"), resolved_snapshot(config))
        .context("writing resolved config")?;

    let mut digests = serde_json::Map::new();
    digests.insert("corpus".into(), sha256_hex(&config.corpus)?.into());
    digests.insert("ontology".into(), sha256_hex(&config.ontology)?.into());
    digests.insert("template".into(), sha256_hex(&config.template)?.into());
    if let Some(path) = &config.lexicon {
        digests.insert("lexicon".into(), sha256_hex(path)?.into());
    }
    if let Some(path) = &config.mock_fixture {
        digests.insert("mock_fixture".into(), sha256_hex(path)?.into());
    }
    // the mock binds an ephemeral port; record a stable marker instead
    let endpoint_label = if mock.is_some() {
        "in-process-mock".to_string()
    } else {
        endpoint.base_url.clone()
    };
    let run_meta = serde_json::json!({
        "run_name": config.run_name,
        "versions": {
            "lexiclass-cli": env!("CARGO_PKG_VERSION"),
        },
        "endpoint_url": endpoint_label,
        "mock": mock.is_some(),
        "input_digests": digests,
        "counts": {
            "documents": corpus.len(),
            "exchanges": exchanges.len(),
            "abstained_documents": abstained_documents,
        },
    });
    std::fs::write(
        run_dir.join("run.json"),
        serde_json::to_string_pretty(&run_meta).expect("serializable") + "\n",
    )
    .context("writing run.json")?;

    Ok(ClassifyOutcome {
        run_dir,
        documents: corpus.len(),
        exchanges: exchanges.len(),
        abstained_documents,
        decisions,
    })
}
