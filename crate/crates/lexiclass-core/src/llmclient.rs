//! Blocking client for chat-completions-style HTTP endpoints with retries,
//! exponential backoff, and bounded request concurrency.
//!
//! Wire shape: `POST {base_url}/chat/completions` with
//! `{model, messages: [{role, content}], temperature, max_tokens}`; the reply
//! text is `choices[0].message.content`. Retry classification is fixed:
//! timeouts, transport errors, 429, and 5xx retry with backoff
//! `backoff_base * 2^attempt`; any other 4xx fails immediately.
//!
//! Credentials come only from the environment variable named in
//! [`EndpointConfig::api_key_env`], never from config files.

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("credential variable {var} is named in config but unset in the environment")]
    MissingCredential { var: String },
    #[error("endpoint host '{host}' is not loopback but this run is restricted to loopback")]
    NetworkGuard { host: String },
    #[error("endpoint returned non-retryable status {status} after {attempts} attempt(s): {body}")]
    NonRetryable {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("retries exhausted after {attempts} attempt(s): {last_error}")]
    ExhaustedRetries { attempts: u32, last_error: String },
    #[error("malformed response body after {attempts} attempt(s): {message}")]
    MalformedResponse { attempts: u32, message: String },
    #[error("batch has no jobs")]
    EmptyBatch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    #[serde(with = "duration_ms")]
    pub backoff_base: Duration,
    pub parallelism: usize,
    pub api_key_env: Option<String>,
    /// Reject any request to a non-loopback host. Set for mock-fixture runs
    /// so offline pipelines provably make no network egress.
    pub loopback_only: bool,
}

mod duration_ms {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl EndpointConfig {
    pub fn new(base_url: &str, model_name: &str) -> Self {
        EndpointConfig {
            base_url: base_url.to_string(),
            model_name: model_name.to_string(),
            temperature: 0.0,
            max_tokens: 64,
            timeout: Duration::from_secs(30),
            max_retries: 2,
            backoff_base: Duration::from_millis(100),
            parallelism: 1,
            api_key_env: None,
            loopback_only: false,
        }
    }

    fn validate(&self) -> Result<(), ClientError> {
        if self.parallelism < 1 {
            return Err(ClientError::InvalidConfig("parallelism must be >= 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(ClientError::InvalidConfig("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// One request/response round trip, including failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionExchange {
    pub request_id: String,
    pub system: String,
    pub user: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub endpoint_error: Option<String>,
}

/// One unit of work for [`classify_batch`].
#[derive(Debug, Clone)]
pub struct BatchJob {
    pub id: String,
    pub system: String,
    pub user: String,
}

static RUNTIME: Lazy<tokio::runtime::Runtime> = Lazy::new(|| {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .expect("tokio runtime")
});

fn endpoint_url(base_url: &str) -> String {
    let trimmed = base_url.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

fn resolve_credential(config: &EndpointConfig) -> Result<Option<String>, ClientError> {
    match &config.api_key_env {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(value) if !value.is_empty() => Ok(Some(value)),
            _ => Err(ClientError::MissingCredential { var: var.clone() }),
        },
    }
}

fn guard_url(config: &EndpointConfig) -> Result<(), ClientError> {
    let url = reqwest::Url::parse(&config.base_url)
        .map_err(|e| ClientError::InvalidConfig(format!("bad base_url: {e}")))?;
    let host = url
        .host_str()
        .ok_or_else(|| ClientError::InvalidConfig("base_url has no host".into()))?;
    if config.loopback_only {
        let is_loopback = host == "localhost"
            || host
                .parse::<std::net::IpAddr>()
                .map(|ip| ip.is_loopback())
                .unwrap_or(false);
        if !is_loopback {
            return Err(ClientError::NetworkGuard {
                host: host.to_string(),
            });
        }
    }
    Ok(())
}

enum AttemptOutcome {
    Success(String),
    Retryable(String),
    Fatal(ClientError),
}

async fn attempt(
    client: &reqwest::Client,
    url: &str,
    config: &EndpointConfig,
    api_key: Option<&str>,
    system: &str,
    user: &str,
    attempts_so_far: u32,
) -> AttemptOutcome {
    let mut messages = Vec::new();
    if !system.is_empty() {
        messages.push(serde_json::json!({"role": "system", "content": system}));
    }
    messages.push(serde_json::json!({"role": "user", "content": user}));
    let body = serde_json::json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    });
    let mut request = client.post(url).json(&body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = match request.send().await {
        Ok(r) => r,
        Err(e) => return AttemptOutcome::Retryable(format!("transport error: {e}")),
    };
    let status = response.status();
    if status.as_u16() == 429 || status.is_server_error() {
        return AttemptOutcome::Retryable(format!("status {}", status.as_u16()));
    }
    if status.is_client_error() {
        let body = response.text().await.unwrap_or_default();
        return AttemptOutcome::Fatal(ClientError::NonRetryable {
            status: status.as_u16(),
            attempts: attempts_so_far,
            body,
        });
    }
    let value: serde_json::Value = match response.json().await {
        Ok(v) => v,
        Err(e) => {
            return AttemptOutcome::Fatal(ClientError::MalformedResponse {
                attempts: attempts_so_far,
                message: e.to_string(),
            })
        }
    };
    match value["choices"][0]["message"]["content"].as_str() {
        Some(content) => AttemptOutcome::Success(content.to_string()),
        None => AttemptOutcome::Fatal(ClientError::MalformedResponse {
            attempts: attempts_so_far,
            message: format!("no choices[0].message.content in {value}"),
        }),
    }
}

/// (response or error, attempts made, latency)
async fn run_request(
    client: &reqwest::Client,
    config: &EndpointConfig,
    api_key: Option<&str>,
    system: &str,
    user: &str,
) -> (Result<String, ClientError>, u32, u64) {
    let url = endpoint_url(&config.base_url);
    let start = Instant::now();
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match attempt(client, &url, config, api_key, system, user, attempts).await {
            AttemptOutcome::Success(text) => {
                return (Ok(text), attempts, start.elapsed().as_millis() as u64)
            }
            AttemptOutcome::Fatal(error) => {
                return (Err(error), attempts, start.elapsed().as_millis() as u64)
            }
            AttemptOutcome::Retryable(message) => {
                if attempts > config.max_retries {
                    return (
                        Err(ClientError::ExhaustedRetries {
                            attempts,
                            last_error: message,
                        }),
                        attempts,
                        start.elapsed().as_millis() as u64,
                    );
                }
                let backoff = config.backoff_base * 2u32.saturating_pow(attempts - 1);
                tokio::time::sleep(backoff).await;
            }
        }
    }
}

fn build_client(config: &EndpointConfig) -> Result<reqwest::Client, ClientError> {
    reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| ClientError::InvalidConfig(format!("client build failed: {e}")))
}

/// Sends one completion request, retrying per the fixed classification.
pub fn complete(
    config: &EndpointConfig,
    system: &str,
    user: &str,
) -> Result<CompletionExchange, ClientError> {
    config.validate()?;
    guard_url(config)?;
    let api_key = resolve_credential(config)?;
    let client = build_client(config)?;
    let (result, attempts, latency_ms) = RUNTIME.block_on(run_request(
        &client,
        config,
        api_key.as_deref(),
        system,
        user,
    ));
    let response_text = result?;
    Ok(CompletionExchange {
        request_id: "single".to_string(),
        system: system.to_string(),
        user: user.to_string(),
        response_text,
        latency_ms,
        attempt_count: attempts,
        endpoint_error: None,
    })
}

/// Runs all jobs with at most `parallelism` requests in flight. Output order
/// equals input order; per-job failures are captured in the exchange and
/// never abort the batch.
pub fn classify_batch(
    config: &EndpointConfig,
    jobs: Vec<BatchJob>,
) -> Result<Vec<CompletionExchange>, ClientError> {
    config.validate()?;
    if jobs.is_empty() {
        return Err(ClientError::EmptyBatch);
    }
    guard_url(config)?;
    let api_key = resolve_credential(config)?;
    let client = build_client(config)?;

    let exchanges = RUNTIME.block_on(async {
        use futures::StreamExt;
        futures::stream::iter(jobs.into_iter().map(|job| {
            let client = &client;
            let api_key = api_key.as_deref();
            let config = &config;
            async move {
                let (result, attempts, latency_ms) =
                    run_request(client, config, api_key, &job.system, &job.user).await;
                match result {
                    Ok(response_text) => CompletionExchange {
                        request_id: job.id,
                        system: job.system,
                        user: job.user,
                        response_text,
                        latency_ms,
                        attempt_count: attempts,
                        endpoint_error: None,
                    },
                    Err(error) => CompletionExchange {
                        request_id: job.id,
                        system: job.system,
                        user: job.user,
                        response_text: String::new(),
                        latency_ms,
                        attempt_count: attempts,
                        endpoint_error: Some(error.to_string()),
                    },
                }
            }
        }))
        .buffered(config.parallelism)
        .collect::<Vec<_>>()
        .await
    });
    Ok(exchanges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_url_joins_once() {
        assert_eq!(
            endpoint_url("http://127.0.0.1:8080"),
            "http://127.0.0.1:8080/chat/completions"
        );
        assert_eq!(
            endpoint_url("http://127.0.0.1:8080/v1/"),
            "http://127.0.0.1:8080/v1/chat/completions"
        );
        assert_eq!(
            endpoint_url("http://host/v1/chat/completions"),
            "http://host/v1/chat/completions"
        );
    }

    #[test]
    fn network_guard_rejects_non_loopback_without_connecting() {
        let mut config = EndpointConfig::new("http://10.255.255.1:9/v1", "m");
        config.loopback_only = true;
        let err = complete(&config, "", "hello").unwrap_err();
        assert!(matches!(err, ClientError::NetworkGuard { .. }));
    }

    #[test]
    fn network_guard_allows_loopback_hosts() {
        let mut config = EndpointConfig::new("http://127.0.0.1:4", "m");
        config.loopback_only = true;
        assert!(guard_url(&config).is_ok());
        config.base_url = "http://localhost:4".into();
        assert!(guard_url(&config).is_ok());
    }

    #[test]
    fn missing_credential_is_reported() {
        let mut config = EndpointConfig::new("http://127.0.0.1:4", "m");
        config.api_key_env = Some("LEXICLASS_TEST_KEY_THAT_IS_UNSET".into());
        let err = complete(&config, "", "hello").unwrap_err();
        assert!(matches!(err, ClientError::MissingCredential { .. }));
    }

    #[test]
    fn zero_parallelism_is_invalid() {
        let mut config = EndpointConfig::new("http://127.0.0.1:4", "m");
        config.parallelism = 0;
        let err = classify_batch(
            &config,
            vec![BatchJob {
                id: "j".into(),
                system: String::new(),
                user: "u".into(),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, ClientError::InvalidConfig(_)));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let config = EndpointConfig::new("http://127.0.0.1:4", "m");
        assert!(matches!(
            classify_batch(&config, vec![]),
            Err(ClientError::EmptyBatch)
        ));
    }
}
