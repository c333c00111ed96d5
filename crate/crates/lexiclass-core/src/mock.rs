//! Fixture-driven mock chat-completions endpoint for offline runs.
//!
//! Fixture files are JSONL, one rule per line:
//! `{"match": {"substring": str}, "response": str, "latency_ms": int|null,
//! "fail_times": int|null}`. The first rule whose substring occurs in the
//! request's message contents answers; `fail_times` makes the rule return 500
//! that many times before succeeding. Unmatched requests get the configured
//! default response, or 404 when none is set.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MockError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("failed to bind mock server: {0}")]
    Bind(std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchSpec {
    pub substring: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: MatchSpec,
    pub response: String,
    #[serde(default)]
    pub latency_ms: Option<u64>,
    #[serde(default)]
    pub fail_times: Option<u32>,
}

/// Loads a JSONL fixture file of [`MockRule`]s.
pub fn load_fixture(path: &Path) -> Result<Vec<MockRule>, MockError> {
    let file = File::open(path).map_err(|source| MockError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rules = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| MockError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rule: MockRule = serde_json::from_str(&line).map_err(|e| MockError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        rules.push(rule);
    }
    Ok(rules)
}

#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// 0 selects an OS-assigned port.
    pub port: u16,
    /// Answer for unmatched requests; `None` returns 404.
    pub default_response: Option<String>,
    /// Append one JSON line per served request.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockLogEntry {
    pub model: String,
    pub matched_rule: Option<usize>,
    pub status: u16,
    pub response_text: String,
    pub request_content: String,
}

struct MockState {
    rules: Vec<MockRule>,
    remaining_fails: Vec<AtomicU32>,
    default_response: Option<String>,
    log: Mutex<Vec<MockLogEntry>>,
    log_file: Option<Mutex<File>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    served: AtomicUsize,
}

struct InFlightGuard(Arc<MockState>);

impl InFlightGuard {
    fn enter(state: Arc<MockState>) -> Self {
        let current = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        state.max_in_flight.fetch_max(current, Ordering::SeqCst);
        InFlightGuard(state)
    }
}

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn completion_payload(id: usize, model: &str, content: &str) -> serde_json::Value {
    serde_json::json!({
        "id": format!("mock-{id}"),
        "object": "chat.completion",
        "created": 0,
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
}

async fn chat_completions(
    State(state): State<Arc<MockState>>,
    Json(request): Json<serde_json::Value>,
) -> Response {
    let _guard = InFlightGuard::enter(state.clone());
    let serial = state.served.fetch_add(1, Ordering::SeqCst);
    let model = request["model"].as_str().unwrap_or("unknown").to_string();
    let content: String = request["messages"]
        .as_array()
        .map(|messages| {
            messages
                .iter()
                .filter_map(|m| m["content"].as_str())
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_default();

    let matched = state
        .rules
        .iter()
        .position(|rule| content.contains(&rule.matcher.substring));

    let (status, response_text, body) = match matched {
        Some(idx) => {
            let rule = &state.rules[idx];
            if let Some(ms) = rule.latency_ms {
                tokio::time::sleep(std::time::Duration::from_millis(ms)).await;
            }
            let should_fail = state.remaining_fails[idx]
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok();
            if should_fail {
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    String::new(),
                    serde_json::json!({"error": "injected failure"}),
                )
            } else {
                (
                    StatusCode::OK,
                    rule.response.clone(),
                    completion_payload(serial, &model, &rule.response),
                )
            }
        }
        None => match &state.default_response {
            Some(default) => (
                StatusCode::OK,
                default.clone(),
                completion_payload(serial, &model, default),
            ),
            None => (
                StatusCode::NOT_FOUND,
                String::new(),
                serde_json::json!({"error": "no matching fixture rule"}),
            ),
        },
    };

    let entry = MockLogEntry {
        model,
        matched_rule: matched,
        status: status.as_u16(),
        response_text,
        request_content: content,
    };
    if let Some(file) = &state.log_file {
        if let Ok(mut file) = file.lock() {
            let _ = writeln!(file, "{}", serde_json::to_string(&entry).unwrap());
        }
    }
    state.log.lock().unwrap().push(entry);

    (status, Json(body)).into_response()
}

/// A running mock endpoint bound to loopback. Shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(rules: Vec<MockRule>, options: MockOptions) -> Result<Self, MockError> {
        let listener =
            std::net::TcpListener::bind(("127.0.0.1", options.port)).map_err(MockError::Bind)?;
        let addr = listener.local_addr().map_err(MockError::Bind)?;
        listener.set_nonblocking(true).map_err(MockError::Bind)?;

        let log_file = match &options.log_path {
            Some(path) => Some(Mutex::new(File::create(path).map_err(|source| {
                MockError::Io {
                    path: path.display().to_string(),
                    source,
                }
            })?)),
            None => None,
        };
        let state = Arc::new(MockState {
            remaining_fails: rules
                .iter()
                .map(|r| AtomicU32::new(r.fail_times.unwrap_or(0)))
                .collect(),
            rules,
            default_response: options.default_response,
            log: Mutex::new(Vec::new()),
            log_file,
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            served: AtomicUsize::new(0),
        });

        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
        let router_state = state.clone();
        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("mock server runtime");
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)
                    .expect("tokio listener from std");
                let app = Router::new()
                    .route("/chat/completions", post(chat_completions))
                    .route("/v1/chat/completions", post(chat_completions))
                    .with_state(router_state);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = shutdown_rx.await;
                    })
                    .await
                    .expect("mock server");
            });
        });

        Ok(MockServer {
            addr,
            state,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        })
    }

    pub fn start_from_file(path: &Path, options: MockOptions) -> Result<Self, MockError> {
        Self::start(load_fixture(path)?, options)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Number of requests served so far.
    pub fn request_count(&self) -> usize {
        self.state.served.load(Ordering::SeqCst)
    }

    /// Highest number of requests observed in flight at once.
    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn log(&self) -> Vec<MockLogEntry> {
        self.state.log.lock().unwrap().clone()
    }

    /// Blocks until the serving thread exits (it only exits on shutdown).
    pub fn wait(mut self) {
        // keep the shutdown channel alive so the server runs until killed
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_rules_parse() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"match":{{"substring":"doc-1"}},"response":"Category: (2)","latency_ms":null,"fail_times":null}}"#
        )
        .unwrap();
        writeln!(
            f,
            r#"{{"match":{{"substring":"slow"}},"response":"ok","latency_ms":50,"fail_times":2}}"#
        )
        .unwrap();
        let rules = load_fixture(f.path()).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].matcher.substring, "doc-1");
        assert_eq!(rules[1].fail_times, Some(2));
    }

    #[test]
    fn malformed_fixture_reports_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{}}").unwrap();
        let err = load_fixture(f.path()).unwrap_err();
        assert!(matches!(err, MockError::Parse { line: 1, .. }));
    }
}
