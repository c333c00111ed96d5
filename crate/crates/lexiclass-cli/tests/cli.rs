//! End-to-end runs of the `lexiclass` binary over the shipped fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn templates() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../templates")
}

fn lexiclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexiclass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn gold_labels() -> std::collections::BTreeMap<String, u64> {
    read_jsonl(&fixtures().join("mini15.jsonl"))
        .into_iter()
        .map(|d| {
            (
                d["doc_id"].as_str().unwrap().to_string(),
                d["broad_label"].as_u64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn stats_matches_the_fixture_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.json");
    let output = lexiclass(&[
        "stats",
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--level",
        "broad",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("mini15.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(stats["documents"], manifest["total"]);
    assert_eq!(stats["histogram"], manifest["broad_histogram"]);
    assert!(stats["token_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn split_writes_three_reproducible_id_files() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let output = lexiclass(&[
            "split",
            "--corpus",
            fixtures().join("mini15.jsonl").to_str().unwrap(),
            "--ratios",
            "0.6,0.2,0.2",
            "--seed",
            "7",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_success(&output);
    }
    let read = |dir: &tempfile::TempDir, name: &str| {
        std::fs::read_to_string(dir.path().join(name)).unwrap()
    };
    let train = read(&dir_a, "train.txt");
    assert_eq!(train.lines().count(), 18);
    assert_eq!(read(&dir_a, "validation.txt").lines().count(), 6);
    assert_eq!(read(&dir_a, "test.txt").lines().count(), 6);
    // identical inputs reproduce identical files
    assert_eq!(train, read(&dir_b, "train.txt"));
    assert_eq!(read(&dir_a, "test.txt"), read(&dir_b, "test.txt"));
}

#[test]
fn missing_corpus_exits_with_usage_code() {
    let output = lexiclass(&[
        "stats",
        "--corpus",
        "/nonexistent/corpus.jsonl",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("usage error"), "{stderr}");
}

#[test]
fn weights_match_the_smoothing_formula() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("weights.json");
    let output = lexiclass(&[
        "weights",
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--level",
        "broad",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    let artifact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let counts: Vec<u64> = artifact["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(counts.iter().sum::<u64>(), 30);
    // label 1 has 4 documents: w = ln(1 + 30/4)
    let w1 = artifact["weights"][1].as_f64().unwrap();
    assert!((w1 - (1.0f64 + 30.0 / 4.0).ln()).abs() < 1e-12);
    assert_eq!(artifact["config"]["clip_max"], 10.0);
}

#[test]
fn chunk_dump_matches_the_stride_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chunks.jsonl");
    let output = lexiclass(&[
        "chunk",
        "--corpus",
        fixtures().join("longdoc.jsonl").to_str().unwrap(),
        "--strategy",
        "stride",
        "--window",
        "512",
        "--overlap",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    let spans: Vec<(u64, u64)> = read_jsonl(&out)
        .iter()
        .map(|v| (v["start"].as_u64().unwrap(), v["end"].as_u64().unwrap()))
        .collect();
    assert_eq!(spans, vec![(0, 512), (448, 960), (896, 1000)]);
}

#[test]
fn summarize_strategy_is_rejected_by_chunk_dump() {
    let output = lexiclass(&[
        "chunk",
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--strategy",
        "summarize",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

struct RunArtifacts {
    dir: tempfile::TempDir,
    run_dir: PathBuf,
}

fn classify_into(dir: &Path, run_name: &str, template: &str, extra: &[&str]) {
    let mut args: Vec<String> = vec![
        "classify".into(),
        "--corpus".into(),
        fixtures().join("mini15.jsonl").display().to_string(),
        "--ontology".into(),
        fixtures().join("ontology_broad15.json").display().to_string(),
        "--template".into(),
        templates().join(template).display().to_string(),
        "--output-dir".into(),
        dir.display().to_string(),
        "--run-name".into(),
        run_name.into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let output = Command::new(env!("CARGO_BIN_EXE_lexiclass"))
        .args(&args)
        .output()
        .unwrap();
    assert_success(&output);
}

fn classify_mini15(run_name: &str, extra: &[&str]) -> RunArtifacts {
    classify_mini15_with(run_name, "scdb_fine_numeric.txt", extra)
}

fn classify_mini15_with(run_name: &str, template: &str, extra: &[&str]) -> RunArtifacts {
    let dir = tempfile::tempdir().unwrap();
    classify_into(dir.path(), run_name, template, extra);
    let run_dir = dir.path().join(run_name);
    RunArtifacts { dir, run_dir }
}

#[test]
fn gold_mock_run_reproduces_gold_decisions() {
    let artifacts = classify_mini15(
        "gold",
        &[
            "--mock-fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ],
    );
    let decisions = read_jsonl(&artifacts.run_dir.join("decisions.jsonl"));
    assert_eq!(decisions.len(), 30);
    let golds = gold_labels();
    for decision in &decisions {
        let doc_id = decision["doc_id"].as_str().unwrap();
        assert_eq!(
            decision["label"].as_u64().unwrap(),
            golds[doc_id],
            "doc {doc_id}"
        );
        assert_eq!(decision["abstained"], false);
    }
    // run dir is self-describing
    assert!(artifacts.run_dir.join("config.resolved.txt").is_file());
    let run_meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(artifacts.run_dir.join("run.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(run_meta["mock"], true);
    assert!(run_meta["input_digests"]["corpus"].as_str().unwrap().len() == 64);
    drop(artifacts.dir);
}

#[test]
fn evaluate_reports_perfect_accuracy_for_the_gold_run() {
    let artifacts = classify_mini15(
        "gold",
        &[
            "--mock-fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ],
    );
    let report_path = artifacts.dir.path().join("report.json");
    let output = lexiclass(&[
        "evaluate",
        "--decisions",
        artifacts.run_dir.join("decisions.jsonl").to_str().unwrap(),
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--run-name",
        "Mock/gold",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_success(&output);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["macro_f1"], 1.0);
    assert_eq!(report["abstain_rate"], 0.0);
}

#[test]
fn default_wrong_label_accuracy_equals_gold_share() {
    let artifacts = classify_mini15("wrong", &["--mock-default", "Category: (3)"]);
    let decisions = read_jsonl(&artifacts.run_dir.join("decisions.jsonl"));
    assert!(decisions.iter().all(|d| d["label"].as_u64() == Some(3)));
    let report_path = artifacts.dir.path().join("report.json");
    let output = lexiclass(&[
        "evaluate",
        "--decisions",
        artifacts.run_dir.join("decisions.jsonl").to_str().unwrap(),
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_success(&output);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    // label 3 has 2 of 30 gold documents
    let expected = 2.0 / 30.0;
    assert!((report["accuracy"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn stride_run_logs_one_exchange_per_chunk() {
    let dir = tempfile::tempdir().unwrap();
    let output = lexiclass(&[
        "classify",
        "--corpus",
        fixtures().join("longdoc.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--template",
        templates().join("scdb_fine_numeric.txt").to_str().unwrap(),
        "--strategy",
        "stride",
        "--window",
        "512",
        "--overlap",
        "64",
        "--rule",
        "majority",
        "--mock-default",
        "Category: (0)",
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--run-name",
        "stride",
    ]);
    assert_success(&output);
    let exchanges = read_jsonl(&dir.path().join("stride/exchanges.jsonl"));
    assert_eq!(exchanges.len(), 3);
    let ids: Vec<&str> = exchanges
        .iter()
        .map(|e| e["request_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, vec!["long-001#0", "long-001#1", "long-001#2"]);
    let decisions = read_jsonl(&dir.path().join("stride/decisions.jsonl"));
    assert_eq!(decisions[0]["label"], 0);
    assert_eq!(decisions[0]["support"], 3);
}

#[test]
fn identical_mock_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixtures().join("mock_gold_mini15.jsonl");
    let run = || {
        classify_into(
            dir.path(),
            "repro",
            "scdb_fine_numeric.txt",
            &["--mock-fixture", fixture.to_str().unwrap()],
        )
    };
    let names = ["decisions.jsonl", "predictions.jsonl", "config.resolved.txt", "run.json"];
    run();
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| std::fs::read(dir.path().join("repro").join(n)).unwrap())
        .collect();
    run();
    for (name, left) in names.iter().zip(first) {
        let right = std::fs::read(dir.path().join("repro").join(name)).unwrap();
        assert_eq!(left, right, "{name} differs");
    }
}

#[test]
fn retrieval_augmented_run_injects_the_retrieved_block() {
    let artifacts = classify_mini15_with(
        "rag",
        "scdb_rag_names.txt",
        &[
            "--lexicon",
            fixtures().join("lexicon_broad.txt").to_str().unwrap(),
            "--retrieval-k",
            "3",
            "--mock-fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ],
    );
    let exchanges = read_jsonl(&artifacts.run_dir.join("exchanges.jsonl"));
    assert_eq!(exchanges.len(), 30);
    let user = exchanges[0]["user"].as_str().unwrap();
    assert!(user.contains("Retrieved Relevant Categories:"));
    assert!(user.contains("--- Opinion Start ---"));
    let decisions = read_jsonl(&artifacts.run_dir.join("decisions.jsonl"));
    let golds = gold_labels();
    for decision in &decisions {
        let doc_id = decision["doc_id"].as_str().unwrap();
        assert_eq!(decision["label"].as_u64().unwrap(), golds[doc_id]);
    }
}

#[test]
fn fewshot_examples_appear_in_prompts() {
    let artifacts = classify_mini15(
        "fewshot",
        &[
            "--fewshot-k",
            "3",
            "--fewshot-cap",
            "1",
            "--mock-default",
            "Category: (0)",
        ],
    );
    let exchanges = read_jsonl(&artifacts.run_dir.join("exchanges.jsonl"));
    let user = exchanges[0]["user"].as_str().unwrap();
    assert!(user.contains("Example Classifications:"));
    assert_eq!(user.matches("Opinion (truncated):").count(), 3);
}

#[test]
fn summarize_strategy_classifies_via_summaries() {
    let artifacts = classify_mini15(
        "summ",
        &[
            "--strategy",
            "summarize",
            "--budget",
            "40",
            "--mock-default",
            "Category: (0)",
        ],
    );
    let exchanges = read_jsonl(&artifacts.run_dir.join("exchanges.jsonl"));
    assert_eq!(exchanges.len(), 30);
    let decisions = read_jsonl(&artifacts.run_dir.join("decisions.jsonl"));
    assert_eq!(decisions.len(), 30);
}

#[test]
fn abstain_policies_yield_two_accuracies() {
    // hand-built decisions over four mini15 documents:
    // mn15-001 gold 0 -> 0 (correct), mn15-002 gold 1 -> 1 (correct),
    // mn15-003 gold 1 -> abstain, mn15-004 gold 1 -> 5 (wrong)
    let dir = tempfile::tempdir().unwrap();
    let decisions_path = dir.path().join("decisions.jsonl");
    std::fs::write(
        &decisions_path,
        concat!(
            r#"{"doc_id":"mn15-001","label":0,"rule":"majority","support":1,"abstained":false}"#,
            "\n",
            r#"{"doc_id":"mn15-002","label":1,"rule":"majority","support":1,"abstained":false}"#,
            "\n",
            r#"{"doc_id":"mn15-003","label":null,"rule":"majority","support":0,"abstained":true}"#,
            "\n",
            r#"{"doc_id":"mn15-004","label":5,"rule":"majority","support":1,"abstained":false}"#,
            "\n",
        ),
    )
    .unwrap();
    let accuracy_for = |policy: &str| -> f64 {
        let out = dir.path().join(format!("report_{policy}.json"));
        let output = lexiclass(&[
            "evaluate",
            "--decisions",
            decisions_path.to_str().unwrap(),
            "--corpus",
            fixtures().join("mini15.jsonl").to_str().unwrap(),
            "--ontology",
            fixtures().join("ontology_broad15.json").to_str().unwrap(),
            "--abstain-policy",
            policy,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_success(&output);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        report["accuracy"].as_f64().unwrap()
    };
    assert!((accuracy_for("count_as_error") - 0.5).abs() < 1e-12);
    assert!((accuracy_for("exclude") - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn preset_config_files_drive_full_runs() {
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let dir = tempfile::tempdir().unwrap();
    for preset in ["stride64_majority", "concat512_first", "summarization512", "rag_keywords"] {
        let output = Command::new(env!("CARGO_BIN_EXE_lexiclass"))
            .current_dir(&workspace)
            .args([
                "classify",
                "--config",
                &format!("configs/{preset}.conf"),
                "--output-dir",
                dir.path().to_str().unwrap(),
                "--run-name",
                preset,
            ])
            .output()
            .unwrap();
        assert_success(&output);
        let decisions = read_jsonl(&dir.path().join(preset).join("decisions.jsonl"));
        assert_eq!(decisions.len(), 30, "{preset}");
        let golds = gold_labels();
        for decision in &decisions {
            let doc_id = decision["doc_id"].as_str().unwrap();
            assert_eq!(decision["label"].as_u64().unwrap(), golds[doc_id], "{preset} {doc_id}");
        }
    }
}

#[test]
fn ids_file_restricts_the_run_to_a_split() {
    let dir = tempfile::tempdir().unwrap();
    let output = lexiclass(&[
        "split",
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ratios",
        "0.6,0.2,0.2",
        "--seed",
        "7",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&output);
    let test_ids = dir.path().join("test.txt");
    let expected: Vec<String> = std::fs::read_to_string(&test_ids)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    classify_into(
        dir.path(),
        "testsplit",
        "scdb_fine_numeric.txt",
        &[
            "--ids-file",
            test_ids.to_str().unwrap(),
            "--mock-fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ],
    );
    let decisions = read_jsonl(&dir.path().join("testsplit/decisions.jsonl"));
    assert_eq!(decisions.len(), 6);
    let mut decided: Vec<String> = decisions
        .iter()
        .map(|d| d["doc_id"].as_str().unwrap().to_string())
        .collect();
    decided.sort();
    assert_eq!(decided, expected);
}

#[test]
fn ingest_normalizes_csv_to_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("corpus.csv");
    std::fs::write(
        &csv_path,
        "doc_id,text,broad_label,fine_label\na,\"text, quoted\",3,\nb,plain,,7\n",
    )
    .unwrap();
    let out = dir.path().join("normalized.jsonl");
    let output = lexiclass(&[
        "ingest",
        "--corpus",
        csv_path.to_str().unwrap(),
        "--format",
        "csv",
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
        "--level",
        "broad",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_success(&output);
    let docs = read_jsonl(&out);
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0]["text"], "text, quoted");
    assert_eq!(docs[0]["broad_label"], 3);
    assert_eq!(docs[1]["fine_label"], 7);
}

#[test]
fn mock_serve_answers_the_wire_format() {
    use std::io::{BufRead, BufReader, Read, Write};

    let mut child = Command::new(env!("CARGO_BIN_EXE_lexiclass"))
        .args([
            "mock-serve",
            "--fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
            "--default",
            "Category: (12)",
        ])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut lines = BufReader::new(stdout).lines();
    let first = lines.next().unwrap().unwrap();
    let url = first
        .rsplit_once("listening on ")
        .map(|(_, url)| url.trim().to_string())
        .unwrap_or_else(|| panic!("unexpected banner: {first}"));
    let addr = url.strip_prefix("http://").unwrap();

    let body = r#"{"model":"m","messages":[{"role":"user","content":"classify MN15DOC001 now"}],"temperature":0,"max_tokens":8}"#;
    let request = format!(
        "POST /chat/completions HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    stream.write_all(request.as_bytes()).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    let _ = child.wait();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    // doc 1 is gold label 0 in the fixture
    assert!(response.contains("Category: (0)"), "{response}");
}

#[test]
fn classify_talks_to_an_external_endpoint_via_base_url() {
    use std::io::{BufRead, BufReader};

    let mut server = Command::new(env!("CARGO_BIN_EXE_lexiclass"))
        .args([
            "mock-serve",
            "--fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let banner = BufReader::new(server.stdout.take().unwrap())
        .lines()
        .next()
        .unwrap()
        .unwrap();
    let base_url = banner.rsplit_once("listening on ").unwrap().1.trim().to_string();

    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_lexiclass"))
        .env("LEXICLASS_TEST_KEY", "test-key")
        .args([
            "classify",
            "--corpus",
            fixtures().join("mini15.jsonl").to_str().unwrap(),
            "--ontology",
            fixtures().join("ontology_broad15.json").to_str().unwrap(),
            "--template",
            templates().join("scdb_fine_numeric.txt").to_str().unwrap(),
            "--base-url",
            &base_url,
            "--model",
            "external-model",
            "--api-key-env",
            "LEXICLASS_TEST_KEY",
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--run-name",
            "external",
        ])
        .output()
        .unwrap();
    server.kill().unwrap();
    let _ = server.wait();
    assert_success(&output);

    let decisions = read_jsonl(&dir.path().join("external/decisions.jsonl"));
    assert_eq!(decisions.len(), 30);
    let golds = gold_labels();
    for decision in &decisions {
        let doc_id = decision["doc_id"].as_str().unwrap();
        assert_eq!(decision["label"].as_u64().unwrap(), golds[doc_id]);
    }
    let run_meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("external/run.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(run_meta["mock"], false);
    assert_eq!(run_meta["endpoint_url"].as_str().unwrap(), base_url);
}

#[test]
fn evaluate_rejects_labels_outside_the_ontology() {
    let dir = tempfile::tempdir().unwrap();
    let decisions_path = dir.path().join("decisions.jsonl");
    std::fs::write(
        &decisions_path,
        r#"{"doc_id":"mn15-001","label":99,"rule":"majority","support":1,"abstained":false}"#,
    )
    .unwrap();
    let output = lexiclass(&[
        "evaluate",
        "--decisions",
        decisions_path.to_str().unwrap(),
        "--corpus",
        fixtures().join("mini15.jsonl").to_str().unwrap(),
        "--ontology",
        fixtures().join("ontology_broad15.json").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("out of range"), "{stderr}");
}

#[test]
fn compare_merges_reports_into_a_marked_table() {
    let gold = classify_mini15(
        "gold",
        &[
            "--mock-fixture",
            fixtures().join("mock_gold_mini15.jsonl").to_str().unwrap(),
        ],
    );
    let wrong = classify_mini15("wrong", &["--mock-default", "Category: (3)"]);
    let evaluate = |artifacts: &RunArtifacts, run_name: &str, out: &Path| {
        let output = lexiclass(&[
            "evaluate",
            "--decisions",
            artifacts.run_dir.join("decisions.jsonl").to_str().unwrap(),
            "--corpus",
            fixtures().join("mini15.jsonl").to_str().unwrap(),
            "--ontology",
            fixtures().join("ontology_broad15.json").to_str().unwrap(),
            "--run-name",
            run_name,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_success(&output);
    };
    let dir = tempfile::tempdir().unwrap();
    let gold_report = dir.path().join("gold.json");
    let wrong_report = dir.path().join("wrong.json");
    evaluate(&gold, "Mock/gold", &gold_report);
    evaluate(&wrong, "Mock/default-wrong", &wrong_report);

    let out_dir = dir.path().join("comparison");
    let output = lexiclass(&[
        "compare",
        "--reports",
        gold_report.to_str().unwrap(),
        wrong_report.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&output);
    let table = String::from_utf8_lossy(&output.stdout);
    assert!(table.contains("Model"), "{table}");
    assert!(table.contains("Technique"));
    assert!(table.contains("Accuracy"));
    assert!(table.contains("1.000*"));
    assert!(out_dir.join("comparison.csv").is_file());
    assert!(out_dir.join("comparison.json").is_file());
}
