//! Pluggable judge client used for LLM-scored annotation and evaluation.
//!
//! Two implementations cover the two ways a run is driven: [`HttpJudge`]
//! posts a chat-completion request to an endpoint configured through
//! environment variables, and [`OfflineJudge`] replays canned responses
//! keyed by sample id and request kind, which keeps batch evaluations and
//! tests fully deterministic.

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the judge endpoint URL.
pub const ENDPOINT_ENV: &str = "SEGREASON_JUDGE_ENDPOINT";
/// Environment variable holding the bearer token, if the endpoint needs one.
pub const AUTH_ENV: &str = "SEGREASON_JUDGE_TOKEN";

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("judge endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("judge response has no string at path {0:?}")]
    MissingField(String),
    #[error("judge endpoint not configured: set {0}")]
    NotConfigured(&'static str),
    #[error("no canned response for {kind} request of sample {sample_id}")]
    NoCannedResponse { sample_id: String, kind: RequestKind },
    #[error("invalid offline responses file: {0}")]
    BadOfflineFile(String),
}

/// What a judge call is for; the offline client keys its responses on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Difficulty,
    ShortChain,
    LongChain,
    ReasoningScore,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RequestKind::Difficulty => "difficulty",
            RequestKind::ShortChain => "short_chain",
            RequestKind::LongChain => "long_chain",
            RequestKind::ReasoningScore => "reasoning_score",
        };
        f.write_str(name)
    }
}

/// One prompt destined for the judge.
#[derive(Debug, Clone)]
pub struct JudgeRequest {
    pub sample_id: String,
    pub kind: RequestKind,
    pub prompt: String,
}

/// A synchronous judge backend. Implementations must be shareable across
/// the annotation worker threads.
pub trait JudgeClient: Send + Sync {
    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError>;
}

/// Retry schedule for transport-level failures. Parse-level failures are
/// never retried here; the caller decides whether to reprompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    /// Backoff before attempt n+1 is `backoff_ms << (n - 1)` milliseconds.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 200,
        }
    }
}

fn retryable(error: &JudgeError) -> bool {
    match error {
        JudgeError::Transport { .. } => true,
        // Overload and server-side errors are worth retrying; anything
        // else (auth, bad request) will not get better.
        JudgeError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

/// Calls the judge, retrying transport failures with exponential backoff.
pub fn complete_with_retry(
    judge: &dyn JudgeClient,
    request: &JudgeRequest,
    retry: &RetryPolicy,
) -> Result<String, JudgeError> {
    let attempts = retry.max_attempts.max(1);
    let mut last = None;
    for attempt in 1..=attempts {
        match judge.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if retryable(&e) && attempt < attempts => {
                std::thread::sleep(Duration::from_millis(
                    retry.backoff_ms << (attempt - 1),
                ));
                last = Some(e);
            }
            Err(e) => {
                last = Some(e);
                break;
            }
        }
    }
    // Fold the attempt count into transport errors so callers see how hard
    // we tried.
    Err(match last.expect("at least one attempt ran") {
        JudgeError::Transport { message, .. } => JudgeError::Transport {
            attempts,
            message,
        },
        other => other,
    })
}

/// Knobs of the HTTP judge: request fields and response extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    /// Model name sent in the request body.
    pub model: String,
    /// Sampling temperature; scoring wants determinism, so 0 by default.
    pub temperature: f64,
    /// Dot-separated path to the response text, e.g.
    /// `choices.0.message.content` for chat-completion shaped replies.
    pub response_path: String,
    /// Maximum concurrent in-flight requests during batch annotation.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            model: "judge".into(),
            temperature: 0.0,
            response_path: "choices.0.message.content".into(),
            concurrency: 4,
            retry: RetryPolicy::default(),
            timeout_secs: 60,
        }
    }
}

/// Walks a dot-separated path of object keys and array indices down a JSON
/// value, expecting a string at the end.
pub fn extract_response_text(
    value: &serde_json::Value,
    path: &str,
) -> Result<String, JudgeError> {
    let mut cursor = value;
    for segment in path.split('.') {
        cursor = match segment.parse::<usize>() {
            Ok(index) => cursor.get(index),
            Err(_) => cursor.get(segment),
        }
        .ok_or_else(|| JudgeError::MissingField(path.to_string()))?;
    }
    cursor
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| JudgeError::MissingField(path.to_string()))
}

/// Judge backed by a chat-completion style HTTP endpoint.
pub struct HttpJudge {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_token: Option<String>,
    config: JudgeConfig,
}

impl HttpJudge {
    pub fn new(endpoint: String, auth_token: Option<String>, config: JudgeConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .expect("default TLS backend is available");
        HttpJudge {
            client,
            endpoint,
            auth_token,
            config,
        }
    }

    /// Reads the endpoint from [`ENDPOINT_ENV`] and the optional bearer
    /// token from [`AUTH_ENV`].
    pub fn from_env(config: JudgeConfig) -> Result<Self, JudgeError> {
        let endpoint =
            std::env::var(ENDPOINT_ENV).map_err(|_| JudgeError::NotConfigured(ENDPOINT_ENV))?;
        let auth_token = std::env::var(AUTH_ENV).ok();
        Ok(HttpJudge::new(endpoint, auth_token, config))
    }
}

impl JudgeClient for HttpJudge {
    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.temperature,
        });
        let mut http = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.auth_token {
            http = http.bearer_auth(token);
        }
        let response = http.send().map_err(|e| JudgeError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| JudgeError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(JudgeError::Http { status, body });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| JudgeError::Transport {
                attempts: 1,
                message: format!("response is not JSON: {e}"),
            })?;
        extract_response_text(&value, &self.config.response_path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OfflineLine {
    sample_id: String,
    kind: RequestKind,
    text: String,
}

/// Judge that replays canned responses keyed by `(sample_id, kind)`.
#[derive(Debug, Default, Clone)]
pub struct OfflineJudge {
    responses: HashMap<(String, RequestKind), String>,
}

impl OfflineJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample_id: &str, kind: RequestKind, text: &str) {
        self.responses
            .insert((sample_id.to_string(), kind), text.to_string());
    }

    /// Loads a JSONL file of `{"sample_id", "kind", "text"}` lines.
    pub fn from_jsonl(text: &str) -> Result<Self, JudgeError> {
        let mut judge = OfflineJudge::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: OfflineLine = serde_json::from_str(line)
                .map_err(|e| JudgeError::BadOfflineFile(format!("line {}: {e}", i + 1)))?;
            judge
                .responses
                .insert((parsed.sample_id, parsed.kind), parsed.text);
        }
        Ok(judge)
    }
}

impl JudgeClient for OfflineJudge {
    fn complete(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        self.responses
            .get(&(request.sample_id.clone(), request.kind))
            .cloned()
            .ok_or_else(|| JudgeError::NoCannedResponse {
                sample_id: request.sample_id.clone(),
                kind: request.kind,
            })
    }
}
