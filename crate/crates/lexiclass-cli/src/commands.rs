//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use lexiclass_core::chunker::{chunk, token_count, ChunkPlan, ChunkStrategy};
use lexiclass_core::classweights::{compute_weights, WeightConfig, WeightsArtifact};
use lexiclass_core::corpus::{split_corpus, Corpus, CorpusFormat, LabelLevel, LabelOntology};
use lexiclass_core::decision::DocumentDecision;
use lexiclass_core::eval::{
    compare_runs, confusion, metrics, pair_golds, AbstainPolicy, NamedReport,
};
use lexiclass_core::mock::{MockOptions, MockServer};

use crate::config::{resolve, ClassifyFlags};
use crate::pipeline::run_classify;
use crate::{CliError, CliResult};

fn parse_format(format: &str) -> CliResult<CorpusFormat> {
    format.parse().map_err(CliError::Usage)
}

fn parse_level(level: &str) -> CliResult<LabelLevel> {
    level.parse().map_err(CliError::Usage)
}

fn load_corpus(path: &Path, format: &str) -> CliResult<Corpus> {
    if !path.is_file() {
        return Err(CliError::usage(format!("corpus file not found: {}", path.display())));
    }
    Corpus::load(path, parse_format(format)?).map_err(|e| CliError::usage(format!("corpus: {e}")))
}

fn load_ontology(path: &Path) -> CliResult<LabelOntology> {
    if !path.is_file() {
        return Err(CliError::usage(format!("ontology file not found: {}", path.display())));
    }
    LabelOntology::from_json_file(path).map_err(|e| CliError::usage(format!("ontology: {e}")))
}

pub fn cmd_ingest(
    corpus: &Path,
    format: &str,
    ontology: Option<&Path>,
    level: &str,
    out: Option<&Path>,
) -> CliResult<()> {
    let corpus_data = load_corpus(corpus, format)?;
    if let Some(ontology_path) = ontology {
        let ontology = load_ontology(ontology_path)?;
        let level = parse_level(level)?;
        corpus_data
            .validate_labels(level, &ontology)
            .map_err(|e| CliError::usage(format!("corpus labels: {e}")))?;
        println!(
            "validated {} documents against {} ({} labels)",
            corpus_data.len(),
            ontology_path.display(),
            ontology.len()
        );
    } else {
        println!("loaded {} documents", corpus_data.len());
    }
    if let Some(out) = out {
        corpus_data
            .save_jsonl(out)
            .map_err(|e| CliError::Runtime(e.into()))?;
        println!("wrote normalized corpus to {}", out.display());
    }
    Ok(())
}

pub fn cmd_stats(
    corpus: &Path,
    format: &str,
    ontology: Option<&Path>,
    level: &str,
    out: Option<&Path>,
) -> CliResult<()> {
    let corpus = load_corpus(corpus, format)?;
    let mut lengths: Vec<usize> = corpus.docs().iter().map(|d| token_count(&d.text)).collect();
    lengths.sort_unstable();
    let n = lengths.len();
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    println!("documents: {n}");
    println!("token length mean: {mean:.1}");
    println!("token length median: {median:.1}");

    let mut histogram_json = serde_json::Value::Null;
    if let Some(ontology_path) = ontology {
        let ontology = load_ontology(ontology_path)?;
        let level = parse_level(level)?;
        let hist = corpus
            .label_histogram(level, ontology.len())
            .map_err(|e| CliError::usage(e.to_string()))?;
        println!("label histogram ({level}):");
        for (label, count) in hist.iter().enumerate() {
            let name = ontology.name_of(label).unwrap_or("?");
            println!("  {label:>4}  {count:>6}  {name}");
        }
        histogram_json = serde_json::json!(hist
            .iter()
            .enumerate()
            .map(|(label, count)| (label.to_string(), *count))
            .collect::<BTreeMap<String, usize>>());
    }
    if let Some(out) = out {
        let payload = serde_json::json!({
            "documents": n,
            "token_mean": mean,
            "token_median": median,
            "histogram": histogram_json,
        });
        std::fs::write(out, serde_json::to_string_pretty(&payload).unwrap() + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn cmd_split(
    corpus: &Path,
    format: &str,
    ratios: &str,
    seed: u64,
    out_dir: &Path,
) -> CliResult<()> {
    let corpus = load_corpus(corpus, format)?;
    let parts: Vec<&str> = ratios.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage("ratios must be three comma-separated fractions"));
    }
    let mut parsed = [0.0f64; 3];
    for (i, part) in parts.iter().enumerate() {
        parsed[i] = part
            .trim()
            .parse()
            .map_err(|e| CliError::usage(format!("bad ratio '{part}': {e}")))?;
    }
    let split = split_corpus(&corpus, parsed, seed).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, ids) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let path = out_dir.join(format!("{name}.txt"));
        let mut file =
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        for id in ids {
            writeln!(file, "{id}")?;
        }
    }
    let summary = serde_json::json!({
        "seed": split.seed,
        "ratios": split.ratios,
        "sizes": {
            "train": split.train.len(),
            "validation": split.validation.len(),
            "test": split.test.len(),
        },
    });
    std::fs::write(
        out_dir.join("split.json"),
        serde_json::to_string_pretty(&summary).unwrap() + "\n",
    )?;
    println!(
        "split {} documents into {}/{}/{} (seed {seed})",
        corpus.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_weights(
    corpus: &Path,
    format: &str,
    ontology: &Path,
    level: &str,
    clip_min: f64,
    clip_max: f64,
    epsilon: f64,
    out: Option<&Path>,
) -> CliResult<()> {
    let corpus = load_corpus(corpus, format)?;
    let ontology = load_ontology(ontology)?;
    let level = parse_level(level)?;
    let counts = corpus
        .label_histogram(level, ontology.len())
        .map_err(|e| CliError::usage(e.to_string()))?;
    let config = WeightConfig {
        clip_min,
        clip_max,
        epsilon,
    };
    let weights = compute_weights(&counts, &config).map_err(|e| CliError::usage(e.to_string()))?;
    let artifact = WeightsArtifact {
        weights: weights.weights,
        config,
        counts,
    };
    let payload = serde_json::to_string_pretty(&artifact).unwrap() + "\n";
    match out {
        Some(path) => {
            std::fs::write(path, &payload).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote weights for {} classes to {}", artifact.counts.len(), path.display());
        }
        None => print!("{payload}"),
    }
    Ok(())
}

pub fn cmd_chunk(
    corpus: &Path,
    format: &str,
    strategy: &str,
    window: usize,
    overlap: usize,
    budget: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    let corpus = load_corpus(corpus, format)?;
    let strategy: ChunkStrategy = strategy.parse().map_err(CliError::Usage)?;
    if strategy == ChunkStrategy::Summarize {
        return Err(CliError::usage(
            "summarize produces no token spans to dump; use it via `classify --strategy summarize`",
        ));
    }
    let plan = ChunkPlan::new(strategy, window, overlap, budget);
    plan.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mut lines = Vec::new();
    for doc in corpus.docs() {
        let chunks = chunk(doc, &plan).map_err(|e| CliError::Runtime(e.into()))?;
        for c in chunks {
            lines.push(serde_json::json!({
                "doc_id": c.doc_id,
                "ordinal": c.ordinal,
                "start": c.span.start,
                "end": c.span.end,
            }));
        }
    }
    let text = lines
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} chunk spans to {}", lines.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn cmd_classify(flags: &ClassifyFlags) -> CliResult<()> {
    let config = resolve(flags)?;
    let outcome = run_classify(&config)?;
    println!(
        "classified {} documents ({} exchanges, {} abstained) -> {}",
        outcome.documents,
        outcome.exchanges,
        outcome.abstained_documents,
        outcome.run_dir.display()
    );
    Ok(())
}

fn load_decisions(path: &Path) -> CliResult<Vec<DocumentDecision>> {
    if !path.is_file() {
        return Err(CliError::usage(format!("decisions file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut decisions = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let decision: DocumentDecision = serde_json::from_str(line).map_err(|e| {
            CliError::usage(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        decisions.push(decision);
    }
    if decisions.is_empty() {
        return Err(CliError::usage("decisions file is empty"));
    }
    Ok(decisions)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    decisions: &Path,
    corpus: &Path,
    format: &str,
    ontology: &Path,
    level: &str,
    abstain_policy: &str,
    run_name: &str,
    out: Option<&Path>,
) -> CliResult<()> {
    let decisions = load_decisions(decisions)?;
    let corpus = load_corpus(corpus, format)?;
    let ontology = load_ontology(ontology)?;
    let level = parse_level(level)?;
    let policy: AbstainPolicy = abstain_policy.parse().map_err(CliError::Usage)?;

    let mut golds: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus.docs() {
        if let Some(label) = doc.label_at(level) {
            golds.insert(doc.doc_id.clone(), label);
        }
    }
    let pairs = pair_golds(&golds, &decisions).map_err(|e| CliError::usage(e.to_string()))?;
    let cm = confusion(ontology.len(), &pairs, &decisions)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let report = metrics(&cm, policy).map_err(|e| CliError::usage(e.to_string()))?;

    let named = NamedReport {
        run: run_name.to_string(),
        report: report.clone(),
    };
    let comparison = compare_runs(&[(run_name.to_string(), report.clone())])
        .map_err(|e| CliError::Runtime(e.into()))?;
    print!("{}", comparison.text);
    println!("macro recall: {:.3}", report.macro_recall);
    println!(
        "abstain rate: {:.3} ({} of {})",
        report.abstain_rate,
        cm.abstain_count,
        cm.evaluated_total()
    );
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_string_pretty(&named).unwrap() + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
        println!("wrote report to {}", out.display());
    }
    Ok(())
}

pub fn cmd_compare(reports: &[PathBuf], out_dir: Option<&Path>) -> CliResult<()> {
    if reports.is_empty() {
        return Err(CliError::usage("compare needs at least one --reports file"));
    }
    let mut named = Vec::new();
    for path in reports {
        if !path.is_file() {
            return Err(CliError::usage(format!("report file not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let report: NamedReport = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        named.push((report.run, report.report));
    }
    let comparison = compare_runs(&named).map_err(|e| CliError::Runtime(e.into()))?;
    print!("{}", comparison.text);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("comparison.txt"), &comparison.text)?;
        std::fs::write(dir.join("comparison.csv"), &comparison.csv)?;
        std::fs::write(
            dir.join("comparison.json"),
            serde_json::to_string_pretty(&comparison.json).unwrap() + "\n",
        )?;
        println!("wrote comparison artifacts to {}", dir.display());
    }
    Ok(())
}

pub fn cmd_mock_serve(
    fixture: Option<&Path>,
    port: u16,
    default: Option<&str>,
    log: Option<&Path>,
) -> CliResult<()> {
    let rules = match fixture {
        Some(path) => lexiclass_core::mock::load_fixture(path)
            .map_err(|e| CliError::usage(format!("fixture: {e}")))?,
        None => Vec::new(),
    };
    if rules.is_empty() && default.is_none() {
        return Err(CliError::usage(
            "mock-serve needs --fixture rules or a --default response",
        ));
    }
    let options = MockOptions {
        port,
        default_response: default.map(str::to_string),
        log_path: log.map(Path::to_path_buf),
    };
    let server = MockServer::start(rules, options).map_err(|e| CliError::Runtime(e.into()))?;
    println!("mock endpoint listening on {}", server.base_url());
    println!("POST {}/chat/completions (Ctrl-C to stop)", server.base_url());
    server.wait();
    Ok(())
}
