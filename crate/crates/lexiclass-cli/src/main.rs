use std::path::PathBuf;

use clap::{Parser, Subcommand};

use lexiclass_cli::commands;
use lexiclass_cli::config::ClassifyFlags;
use lexiclass_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "lexiclass",
    version,
    about = "Classify long court opinions into a two-level label ontology via a chat-completions endpoint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus; optionally write normalized JSONL.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// jsonl | csv
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// broad | fine
        #[arg(long, default_value = "broad")]
        level: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Document count, token-length mean/median, and label histograms.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long, default_value = "broad")]
        level: String,
        /// Write the stats as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic train/validation/test split by seeded shuffle.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// Three comma-separated fractions summing to 1, e.g. 0.8,0.1,0.1
        #[arg(long)]
        ratios: String,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Log-smoothed, clipped class weights from the label histogram.
    Weights {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long, default_value = "broad")]
        level: String,
        #[arg(long, default_value_t = 0.1)]
        clip_min: f64,
        #[arg(long, default_value_t = 10.0)]
        clip_max: f64,
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump chunk spans for audit as JSONL {doc_id, ordinal, start, end}.
    Chunk {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        /// truncate | concat | stride | prompt_window
        #[arg(long, default_value = "stride")]
        strategy: String,
        #[arg(long, default_value_t = 512)]
        window: usize,
        #[arg(long, default_value_t = 64)]
        overlap: usize,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the classification pipeline and write run artifacts.
    Classify(Box<ClassifyFlags>),
    /// Score decisions against gold labels and write a metrics report.
    Evaluate {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long, default_value = "broad")]
        level: String,
        /// count_as_error | exclude
        #[arg(long, default_value = "count_as_error")]
        abstain_policy: String,
        #[arg(long, default_value = "run")]
        run_name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge run reports into a Model/Technique/Accuracy/Precision/F1 table.
    Compare {
        /// Report JSON files produced by `evaluate --out`.
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve the fixture-driven mock chat-completions endpoint.
    MockServe {
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// 0 selects an OS-assigned port.
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Response for unmatched requests (otherwise 404).
        #[arg(long)]
        default: Option<String>,
        /// Append one JSON line per served request.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest {
            corpus,
            format,
            ontology,
            level,
            out,
        } => commands::cmd_ingest(&corpus, &format, ontology.as_deref(), &level, out.as_deref()),
        Command::Stats {
            corpus,
            format,
            ontology,
            level,
            out,
        } => commands::cmd_stats(&corpus, &format, ontology.as_deref(), &level, out.as_deref()),
        Command::Split {
            corpus,
            format,
            ratios,
            seed,
            out_dir,
        } => commands::cmd_split(&corpus, &format, &ratios, seed, &out_dir),
        Command::Weights {
            corpus,
            format,
            ontology,
            level,
            clip_min,
            clip_max,
            epsilon,
            out,
        } => commands::cmd_weights(
            &corpus,
            &format,
            &ontology,
            &level,
            clip_min,
            clip_max,
            epsilon,
            out.as_deref(),
        ),
        Command::Chunk {
            corpus,
            format,
            strategy,
            window,
            overlap,
            budget,
            out,
        } => commands::cmd_chunk(&corpus, &format, &strategy, window, overlap, budget, out.as_deref()),
        Command::Classify(flags) => commands::cmd_classify(&flags),
        Command::Evaluate {
            decisions,
            corpus,
            format,
            ontology,
            level,
            abstain_policy,
            run_name,
            out,
        } => commands::cmd_evaluate(
            &decisions,
            &corpus,
            &format,
            &ontology,
            &level,
            &abstain_policy,
            &run_name,
            out.as_deref(),
        ),
        Command::Compare { reports, out_dir } => {
            commands::cmd_compare(&reports, out_dir.as_deref())
        }
        Command::MockServe {
            fixture,
            port,
            default,
            log,
        } => commands::cmd_mock_serve(fixture.as_deref(), port, default.as_deref(), log.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("{error}");
        std::process::exit(error.exit_code());
    }
}
