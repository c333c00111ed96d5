//! Classification run configuration: defaults, flat key-value config files,
//! and CLI-flag overrides. Precedence is flags > file > defaults; the
//! resolved snapshot written into each run directory is itself a valid
//! config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lexiclass_core::chunker::{ChunkPlan, ChunkStrategy};
use lexiclass_core::corpus::{CorpusFormat, LabelLevel};
use lexiclass_core::decision::DecisionRule;

use crate::{CliError, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "corpus",
    "format",
    "ontology",
    "level",
    "strategy",
    "window",
    "overlap",
    "budget",
    "template",
    "excerpt_budget",
    "fewshot_k",
    "fewshot_seed",
    "fewshot_cap",
    "lexicon",
    "retrieval_k",
    "base_url",
    "model",
    "temperature",
    "max_tokens",
    "timeout_ms",
    "max_retries",
    "backoff_ms",
    "parallelism",
    "api_key_env",
    "rule",
    "seed",
    "output_dir",
    "run_name",
    "mock_fixture",
    "mock_default",
    "ids_file",
];

/// Raw CLI flags for `classify`; every field optional so the file/defaults
/// layers can fill the gaps.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ClassifyFlags {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// jsonl | csv
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// broad | fine
    #[arg(long)]
    pub level: Option<String>,
    /// truncate | concat | stride | summarize | prompt_window
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Overrides the template's excerpt budget.
    #[arg(long)]
    pub excerpt_budget: Option<usize>,
    #[arg(long)]
    pub fewshot_k: Option<usize>,
    #[arg(long)]
    pub fewshot_seed: Option<u64>,
    #[arg(long)]
    pub fewshot_cap: Option<usize>,
    /// Keyword lexicon path; enables retrieval-augmented prompts.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub retrieval_k: Option<usize>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// majority | best_confidence | first_chunk
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_name: Option<String>,
    /// JSONL mock fixture; runs offline against an in-process endpoint.
    #[arg(long)]
    pub mock_fixture: Option<PathBuf>,
    /// Mock answer for unmatched requests (implies mock mode).
    #[arg(long)]
    pub mock_default: Option<String>,
    /// Restrict the run to doc_ids listed one per line.
    #[arg(long)]
    pub ids_file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub format: CorpusFormat,
    pub ontology: PathBuf,
    pub level: LabelLevel,
    pub strategy: ChunkStrategy,
    pub window: usize,
    pub overlap: usize,
    pub budget: usize,
    pub template: PathBuf,
    pub excerpt_budget: Option<usize>,
    pub fewshot_k: usize,
    pub fewshot_seed: u64,
    pub fewshot_cap: usize,
    pub lexicon: Option<PathBuf>,
    pub retrieval_k: usize,
    pub base_url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub parallelism: usize,
    pub api_key_env: Option<String>,
    pub rule: DecisionRule,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub run_name: String,
    pub mock_fixture: Option<PathBuf>,
    pub mock_default: Option<String>,
    pub ids_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn plan(&self) -> ChunkPlan {
        ChunkPlan::new(self.strategy, self.window, self.overlap, self.budget)
    }

    pub fn mock_mode(&self) -> bool {
        self.mock_fixture.is_some() || self.mock_default.is_some()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_name)
    }
}

/// Parses the flat `key = value` format. Blank values mean "unset"; `#`
/// starts a comment line.
pub fn parse_kv_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!(
                "{}:{}: expected 'key = value', got {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "{}:{}: unknown config key '{key}'",
                path.display(),
                idx + 1
            )));
        }
        let value = value.trim().to_string();
        if !value.is_empty() {
            map.insert(key, value);
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| CliError::usage(format!("bad value for {key}: {e}")))
}

struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    fn string(&self, key: &str, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).cloned())
    }

    fn path(&self, key: &str, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone().or_else(|| self.file.get(key).map(PathBuf::from))
    }

    fn parsed<T>(&self, key: &str, flag: &Option<T>, default: T) -> CliResult<T>
    where
        T: std::str::FromStr + Clone,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.file.get(key) {
            Some(raw) => parse_value(key, raw),
            None => Ok(default),
        }
    }
}

/// Resolves flags > file > defaults into a validated [`RunConfig`].
pub fn resolve(flags: &ClassifyFlags) -> CliResult<RunConfig> {
    let file = match &flags.config {
        Some(path) => parse_kv_file(path)?,
        None => BTreeMap::new(),
    };
    let layers = Layered { file };
    let excerpt_budget: Option<usize> = match (&flags.excerpt_budget, layers.file.get("excerpt_budget")) {
        (Some(v), _) => Some(*v),
        (None, Some(raw)) => Some(parse_value("excerpt_budget", raw)?),
        (None, None) => None,
    };

    let corpus = layers
        .path("corpus", &flags.corpus)
        .ok_or_else(|| CliError::usage("corpus is required (flag --corpus or config key)"))?;
    let ontology = layers
        .path("ontology", &flags.ontology)
        .ok_or_else(|| CliError::usage("ontology is required"))?;
    let template = layers
        .path("template", &flags.template)
        .ok_or_else(|| CliError::usage("template is required"))?;

    let format: CorpusFormat = parse_value(
        "format",
        &layers.string("format", &flags.format).unwrap_or_else(|| "jsonl".into()),
    )?;
    let level: LabelLevel = parse_value(
        "level",
        &layers.string("level", &flags.level).unwrap_or_else(|| "broad".into()),
    )?;
    let strategy: ChunkStrategy = parse_value(
        "strategy",
        &layers
            .string("strategy", &flags.strategy)
            .unwrap_or_else(|| "truncate".into()),
    )?;
    let rule: DecisionRule = parse_value(
        "rule",
        &layers.string("rule", &flags.rule).unwrap_or_else(|| "majority".into()),
    )?;

    let config = RunConfig {
        corpus,
        format,
        ontology,
        level,
        strategy,
        window: layers.parsed("window", &flags.window, 512)?,
        overlap: layers.parsed("overlap", &flags.overlap, 0)?,
        budget: layers.parsed("budget", &flags.budget, 5000)?,
        template,
        excerpt_budget,
        fewshot_k: layers.parsed("fewshot_k", &flags.fewshot_k, 0)?,
        fewshot_seed: layers.parsed("fewshot_seed", &flags.fewshot_seed, 17)?,
        fewshot_cap: layers.parsed("fewshot_cap", &flags.fewshot_cap, 1)?,
        lexicon: layers.path("lexicon", &flags.lexicon),
        retrieval_k: layers.parsed("retrieval_k", &flags.retrieval_k, 3)?,
        base_url: layers.string("base_url", &flags.base_url),
        model: layers
            .string("model", &flags.model)
            .unwrap_or_else(|| "local-model".into()),
        temperature: layers.parsed("temperature", &flags.temperature, 0.0)?,
        max_tokens: layers.parsed("max_tokens", &flags.max_tokens, 16)?,
        timeout_ms: layers.parsed("timeout_ms", &flags.timeout_ms, 30_000)?,
        max_retries: layers.parsed("max_retries", &flags.max_retries, 2)?,
        backoff_ms: layers.parsed("backoff_ms", &flags.backoff_ms, 100)?,
        parallelism: layers.parsed("parallelism", &flags.parallelism, 4)?,
        api_key_env: layers.string("api_key_env", &flags.api_key_env),
        rule,
        seed: layers.parsed("seed", &flags.seed, 17)?,
        output_dir: layers
            .path("output_dir", &flags.output_dir)
            .unwrap_or_else(|| PathBuf::from("runs")),
        run_name: layers
            .string("run_name", &flags.run_name)
            .unwrap_or_else(|| "run".into()),
        mock_fixture: layers.path("mock_fixture", &flags.mock_fixture),
        mock_default: layers.string("mock_default", &flags.mock_default),
        ids_file: layers.path("ids_file", &flags.ids_file),
    };
    validate(&config)?;
    Ok(config)
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "{what} file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn validate(config: &RunConfig) -> CliResult<()> {
    require_file(&config.corpus, "corpus")?;
    require_file(&config.ontology, "ontology")?;
    require_file(&config.template, "template")?;
    if let Some(lexicon) = &config.lexicon {
        require_file(lexicon, "lexicon")?;
    }
    if let Some(fixture) = &config.mock_fixture {
        require_file(fixture, "mock fixture")?;
    }
    if let Some(ids) = &config.ids_file {
        require_file(ids, "ids")?;
    }
    config
        .plan()
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    if config.base_url.is_none() && !config.mock_mode() {
        return Err(CliError::usage(
            "base_url is required unless --mock-fixture/--mock-default engages the mock endpoint",
        ));
    }
    if config.rule == DecisionRule::BestConfidence {
        return Err(CliError::usage(
            "rule best_confidence needs a confidence-emitting classifier; chat endpoints return text only",
        ));
    }
    if config.parallelism == 0 {
        return Err(CliError::usage("parallelism must be >= 1"));
    }
    Ok(())
}

/// The audit snapshot: every key, blank when unset, reusable as a config file.
pub fn resolved_snapshot(config: &RunConfig) -> String {
    let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let opt_str = |s: &Option<String>| s.clone().unwrap_or_default();
    let entries: Vec<(&str, String)> = vec![
        ("api_key_env", opt_str(&config.api_key_env)),
        ("backoff_ms", config.backoff_ms.to_string()),
        ("base_url", opt_str(&config.base_url)),
        ("budget", config.budget.to_string()),
        ("corpus", config.corpus.display().to_string()),
        ("excerpt_budget", config.excerpt_budget.map(|v| v.to_string()).unwrap_or_default()),
        ("fewshot_cap", config.fewshot_cap.to_string()),
        ("fewshot_k", config.fewshot_k.to_string()),
        ("fewshot_seed", config.fewshot_seed.to_string()),
        ("format", match config.format {
            CorpusFormat::Jsonl => "jsonl".into(),
            CorpusFormat::Csv => "csv".into(),
        }),
        ("ids_file", path_str(&config.ids_file)),
        ("level", config.level.to_string()),
        ("lexicon", path_str(&config.lexicon)),
        ("max_retries", config.max_retries.to_string()),
        ("max_tokens", config.max_tokens.to_string()),
        ("mock_default", opt_str(&config.mock_default)),
        ("mock_fixture", path_str(&config.mock_fixture)),
        ("model", config.model.clone()),
        ("ontology", config.ontology.display().to_string()),
        ("output_dir", config.output_dir.display().to_string()),
        ("overlap", config.overlap.to_string()),
        ("parallelism", config.parallelism.to_string()),
        ("retrieval_k", config.retrieval_k.to_string()),
        ("rule", config.rule.to_string()),
        ("run_name", config.run_name.clone()),
        ("seed", config.seed.to_string()),
        ("strategy", config.strategy.to_string()),
        ("temperature", config.temperature.to_string()),
        ("template", config.template.display().to_string()),
        ("timeout_ms", config.timeout_ms.to_string()),
        ("window", config.window.to_string()),
    ];
    let mut out = String::new();
    for (key, value) in entries {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out
}
